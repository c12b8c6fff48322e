import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctesn.errors import DimensionUnsupported, ShapeMismatch
from ctesn.sampling import MAX_SOBOL_DIM, ParameterSpace, latin_hypercube, sobol_sample

UNIT2 = ParameterSpace(("a", "b"), [0.0, 0.0], [1.0, 1.0])


def test_space_validation():
    with pytest.raises(ValueError):
        ParameterSpace(("a",), [1.0], [1.0])
    with pytest.raises(ValueError):
        ParameterSpace(("a",), [0.0], [1.0], ("log",))
    with pytest.raises(ShapeMismatch):
        ParameterSpace(("a", "b"), [0.0], [1.0])
    sp = ParameterSpace(("k",), [1e-2], [1e2], ("log",))
    assert sp.center()[0] == pytest.approx(1.0)
    assert ParameterSpace.from_dict(sp.to_dict()) == sp


def test_lhs_single_point_inside():
    sp = ParameterSpace(("a", "b", "c"), [-1, 2, 10], [1, 3, 20])
    x = latin_hypercube(sp, 1, seed=0)
    assert x.shape == (1, 3)
    assert np.all(x > sp.lower) and np.all(x < sp.upper)


@given(st.sampled_from([2, 10, 100]), st.integers(1, 6), st.integers(0, 2**31))
def test_lhs_stratification(n, d, seed):
    sp = ParameterSpace(tuple(f"x{i}" for i in range(d)), np.zeros(d), np.arange(1, d + 1, dtype=float))
    u = sp.to_unit(latin_hypercube(sp, n, seed))
    for j in range(d):
        counts = np.bincount(np.floor(u[:, j] * n).astype(int), minlength=n)
        assert np.all(counts == 1)


def test_lhs_log_stratifies_in_log_space():
    sp = ParameterSpace(("k",), [1e-3], [1e3], ("log",))
    x = latin_hypercube(sp, 6, seed=5)[:, 0]
    bins = np.floor((np.log10(x) + 3) / 1.0).astype(int)
    assert sorted(bins) == list(range(6))


def test_lhs_seeding():
    a = latin_hypercube(UNIT2, 10, 7)
    assert np.array_equal(a, latin_hypercube(UNIT2, 10, 7))
    assert not np.array_equal(a, latin_hypercube(UNIT2, 10, 8))


def test_sobol_published_values():
    one = ParameterSpace(("a",), [0.0], [1.0])
    assert sobol_sample(one, 1)[0, 0] == 0.5
    pts = sobol_sample(UNIT2, 3)
    assert np.array_equal(pts, [[0.5, 0.5], [0.75, 0.25], [0.25, 0.75]])


def test_sobol_inside_and_limits():
    sp = ParameterSpace(("a", "b", "c"), [0.036, 2.7e7, 0.9e4], [0.044, 3.3e7, 1.1e4])
    x = sobol_sample(sp, 100)
    assert x.shape == (100, 3)
    assert np.all(x >= sp.lower) and np.all(x <= sp.upper)
    big = ParameterSpace(tuple(range(MAX_SOBOL_DIM + 1)), np.zeros(MAX_SOBOL_DIM + 1), np.ones(MAX_SOBOL_DIM + 1))
    with pytest.raises(DimensionUnsupported):
        sobol_sample(big, 2)


def _star_discrepancy(pts, grid=64):
    # brute force over anchored boxes [0, a) x [0, b) on a grid of corners
    corners = np.arange(1, grid + 1) / grid
    worst = 0.0
    for a in corners:
        inside_a = pts[:, 0] < a
        for b in corners:
            frac = np.mean(inside_a & (pts[:, 1] < b))
            worst = max(worst, abs(frac - a * b))
    return worst


def test_sobol_beats_random_discrepancy():
    sob = sobol_sample(UNIT2, 256)
    rnd = np.random.default_rng(0).random((256, 2))
    assert _star_discrepancy(sob) < _star_discrepancy(rnd)
