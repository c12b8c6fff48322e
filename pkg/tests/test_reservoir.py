import numpy as np
import pytest
import scipy.sparse as sp

from ctesn.errors import ShapeMismatch
from ctesn.integrators import SolveOptions
from ctesn.reservoir import (
    InputScaler,
    ReservoirClock,
    ReservoirMatrices,
    ReservoirSpec,
    build_reservoir,
    simulate_reservoir,
    spectral_radius,
    svd_least_squares,
)
from ctesn.timeseries import SplineSeries, Trajectory

TIGHT = SolveOptions(abstol=1e-12, reltol=1e-12)


def test_spec_validation_and_defaults():
    assert ReservoirSpec(1000).density == 0.01
    assert ReservoirSpec(100).density == 0.1
    assert ReservoirSpec(3).density == 1.0
    for bad in (dict(n_reservoir=0), dict(n_reservoir=5, density=0.0), dict(n_reservoir=5, density=1.5),
                dict(n_reservoir=5, spectral_radius=0.0), dict(n_reservoir=5, activation_f="relu"),
                dict(n_reservoir=5, activation_g="tanh"), dict(n_reservoir=5, clock="wall")):
        with pytest.raises(ValueError):
            ReservoirSpec(**bad)
    spec = ReservoirSpec(7, seed=3)
    assert ReservoirSpec.from_dict(spec.to_dict()) == spec


def test_one_by_one_rescaling():
    mats = build_reservoir(ReservoirSpec(1, density=1.0, spectral_radius=0.9), 2)
    assert abs(mats.dense_A()[0, 0]) == pytest.approx(0.9, abs=1e-15)
    assert np.array_equal(mats.r0, [0.0])


def test_spectral_radius_and_density_at_100():
    spec = ReservoirSpec(100, density=0.1, spectral_radius=1.0, seed=4)
    mats = build_reservoir(spec, 3)
    A = mats.dense_A()
    rho = np.max(np.abs(np.linalg.eigvals(A)))  # dense oracle
    assert 0.99 <= rho <= 1.01
    assert abs(np.count_nonzero(A) - 0.1 * 100**2) <= 0.1 * 0.1 * 100**2
    assert mats.W_hyb.shape == (100, 3)
    assert np.all(np.abs(mats.W_hyb) <= spec.input_scale)


def test_sparse_spectral_radius_matches_dense():
    spec = ReservoirSpec(300, density=0.05, spectral_radius=0.8, seed=1)
    A = build_reservoir(spec, 2).A
    assert sp.issparse(A)
    dense = np.max(np.abs(np.linalg.eigvals(A.toarray())))
    assert spectral_radius(A) == pytest.approx(dense, rel=1e-6)
    assert dense == pytest.approx(0.8, rel=0.01)


def test_build_determinism():
    spec = ReservoirSpec(50, seed=9)
    a, b = build_reservoir(spec, 3), build_reservoir(spec, 3)
    assert np.array_equal(a.dense_A(), b.dense_A()) and np.array_equal(a.W_hyb, b.W_hyb)
    c = build_reservoir(ReservoirSpec(50, seed=10), 3)
    assert not np.array_equal(a.W_hyb, c.W_hyb)


def _const_driver(c, t1=2.0):
    t = np.linspace(0, t1, 5)
    return SplineSeries(Trajectory(t, np.tile(c, (5, 1))))


def test_zero_dynamics():
    spec = ReservoirSpec(3, activation_f="identity")
    mats = ReservoirMatrices(np.zeros((3, 3)), np.zeros((3, 2)), np.zeros(3))
    out = simulate_reservoir(mats, _const_driver([1.0, -2.0]), spec, (0, 2), np.linspace(0, 2, 9))
    assert np.array_equal(out.values, np.zeros((9, 3)))


def test_identity_constant_drive():
    rng = np.random.default_rng(0)
    W = rng.uniform(-1, 1, (4, 2))
    c = np.array([0.3, -0.7])
    spec = ReservoirSpec(4, activation_f="identity")
    mats = ReservoirMatrices(np.zeros((4, 4)), W, np.zeros(4))
    t = np.linspace(0, 2, 11)
    out = simulate_reservoir(mats, _const_driver(c), spec, (0, 2), t, TIGHT)
    assert np.allclose(out.values, np.outer(t, W @ c), atol=1e-12)


def test_tanh_constant_drive():
    rng = np.random.default_rng(1)
    W = rng.uniform(-1, 1, (2, 3))
    c = np.array([0.5, 1.0, -0.25])
    spec = ReservoirSpec(2, activation_f="tanh")
    mats = ReservoirMatrices(np.zeros((2, 2)), W, np.zeros(2))
    t = np.linspace(0, 2, 11)
    out = simulate_reservoir(mats, _const_driver(c), spec, (0, 2), t, TIGHT)
    assert np.allclose(out.values, np.outer(t, np.tanh(W @ c)), atol=1e-12)


def test_driver_shape_checked():
    mats = build_reservoir(ReservoirSpec(3), 2)
    with pytest.raises(ShapeMismatch):
        simulate_reservoir(mats, _const_driver([1.0, 2.0, 3.0]), ReservoirSpec(3), (0, 1), [0, 1])


def test_svd_exact_system():
    rng = np.random.default_rng(2)
    Q, _ = np.linalg.qr(rng.normal(size=(20, 4)))
    M = rng.normal(size=(3, 4))
    W = svd_least_squares(Q, Q @ M.T)
    assert np.max(np.abs(W - M)) <= 1e-10
    assert np.array_equal(svd_least_squares(Q, np.zeros((20, 3))), np.zeros((3, 4)))
    with pytest.raises(ShapeMismatch):
        svd_least_squares(Q, np.zeros((19, 3)))


def _normal_equations_oracle(R, X):
    """Least squares by explicit column pivoting: keep independent columns only."""
    keep = []
    for j in range(R.shape[1]):
        cand = keep + [j]
        sub = R[:, cand]
        # independent if the Gram determinant stays clear of zero
        if np.linalg.det(sub.T @ sub) > 1e-10 * np.prod(np.sum(sub**2, axis=0)):
            keep = cand
    sub = R[:, keep]
    coef = np.linalg.solve(sub.T @ sub, sub.T @ X)
    return X - sub @ coef


def test_svd_rank_deficient_matches_oracle():
    R = np.array([
        [1.0, 2.0, 1.0],
        [0.5, -1.0, 0.5],
        [2.0, 0.0, 2.0],
        [-1.0, 3.0, -1.0],
        [0.0, 1.0, 0.0],
    ])  # column 2 duplicates column 0
    X = R[:, :2] @ np.array([[1.5, -2.0], [0.25, 1.0]])
    X = X + np.array([[0.1, 0.0], [0.0, -0.2], [0.05, 0.1], [0.0, 0.0], [-0.1, 0.3]])  # not in the range
    W = svd_least_squares(R, X)
    res = X - R @ W.T
    oracle = _normal_equations_oracle(R, X)
    assert np.linalg.norm(res) == pytest.approx(np.linalg.norm(oracle), abs=1e-8)
    assert np.max(np.abs(res - oracle)) <= 1e-8
    # minimum norm splits the weight evenly over the duplicated columns
    assert np.allclose(W[:, 0], W[:, 2], atol=1e-10)


def test_scaler_and_clock():
    sc = InputScaler.fit([[0.0, 5.0], [2.0, 5.0], [1.0, 5.0]])
    z = sc.scale([[0.0, 5.0], [2.0, 5.0]])
    assert np.array_equal(z, [[-1.0, 0.0], [1.0, 0.0]])
    assert np.allclose(sc.unscale(z), [[0.0, 5.0], [2.0, 5.0]])
    assert np.array_equal(InputScaler.from_dict(sc.to_dict()).unscale(z), sc.unscale(z))
    clk = ReservoirClock([0.0, 1e-5, 1e-3, 1e5], "grid", 6.0)
    assert np.allclose(clk.to_clock([0.0, 1e-3, 1e5]), [0.0, 4.0, 6.0])
    assert np.allclose(ReservoirClock([2.0, 3.0], "physical").to_clock(2.5), 0.5)
