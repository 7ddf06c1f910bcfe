import numpy as np

from clusterssd.streams import phase_tag, substream


def test_same_path_same_stream():
    a = substream(7, 1, 2, 3).random(10)
    b = substream(7, 1, 2, 3).random(10)
    assert np.array_equal(a, b)


def test_different_paths_differ():
    a = substream(7, 1, 2, 3).random(10)
    b = substream(7, 1, 2, 4).random(10)
    c = substream(8, 1, 2, 3).random(10)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_phase_tag_stable_and_distinct():
    assert phase_tag("clearly_acceptable@100") == phase_tag("clearly_acceptable@100")
    assert phase_tag("clearly_acceptable@100") != phase_tag("clearly_acceptable@101")
    assert isinstance(phase_tag("x"), int)
