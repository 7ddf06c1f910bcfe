"""Simulation-based sample-size determination for cluster-randomized trials
with binary endpoints and posterior-probability decision rules."""

from .numerics import (
    Hypothesis,
    ModelParams,
    NumericError,
    QuadratureRule,
    estimand_delta,
    icc_from_sigma,
    sigma_from_icc,
)
from .datagen import (
    PsiModel,
    ScenarioTable,
    TrialData,
    ZetaProcess,
    build_theta_for_scenario,
    simulate_trial,
)
from .inference import McmcConfig, PosteriorDraws, PriorSpec, sample_posterior
from .gcomp import (
    DeltaPosterior,
    TauValue,
    marginalize_dirichlet,
    marginalize_parametric,
    tau_from_delta,
)
from .proxy import (
    LambdaEstimate,
    estimate_lambda,
    mle_draw,
    proxy_sample,
    proxy_tau,
    proxy_tau_logit,
    theorem1_slope,
)
from .engine import (
    GcompConfig,
    LogitLineFamily,
    TargetUnreachableError,
    TauSample,
    bootstrap_recommendation,
    calibrate_gamma,
    choose_c1,
    estimate_oc,
    find_min_clusters,
    fit_logit_lines,
    oc_curve,
    predict_power,
    simulate_tau_sample,
)
from .config import ConfigError, DesignConfig, load_config, parse_config
from .study import run_proxy_check, run_ssd, run_validate

__version__ = "1.0.0"

__all__ = [
    "Hypothesis", "ModelParams", "NumericError", "QuadratureRule",
    "estimand_delta", "icc_from_sigma", "sigma_from_icc",
    "PsiModel", "ScenarioTable", "TrialData", "ZetaProcess",
    "build_theta_for_scenario", "simulate_trial",
    "McmcConfig", "PosteriorDraws", "PriorSpec", "sample_posterior",
    "DeltaPosterior", "TauValue", "marginalize_dirichlet",
    "marginalize_parametric", "tau_from_delta",
    "LambdaEstimate", "estimate_lambda", "mle_draw", "proxy_sample",
    "proxy_tau", "proxy_tau_logit", "theorem1_slope",
    "GcompConfig", "LogitLineFamily", "TargetUnreachableError", "TauSample",
    "bootstrap_recommendation", "calibrate_gamma", "choose_c1", "estimate_oc",
    "find_min_clusters", "fit_logit_lines", "oc_curve", "predict_power",
    "simulate_tau_sample",
    "ConfigError", "DesignConfig", "load_config", "parse_config",
    "run_proxy_check", "run_ssd", "run_validate",
    "__version__",
]
