"""Operating-characteristic figures from clusterssd curve CSV artifacts."""

from .plot_oc import CurveSchemaError, read_curve_csv, render_oc_figure

__version__ = "1.0.0"

__all__ = ["CurveSchemaError", "read_curve_csv", "render_oc_figure", "__version__"]
