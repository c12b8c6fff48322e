"""Reservoir construction, simulation and the SVD readout.

The reservoir obeys ``r' = f(A r + W_hyb x(p*, t))`` with ``r(0) = 0``, driven
by the (scaled) reference trajectory at the candidate parameter ``p*``.

The reservoir can run on one of two clocks. ``"physical"`` integrates in model
time. ``"grid"`` integrates against a clock that advances uniformly from one
save-grid knot to the next, so ``clock_span`` reservoir time units cover the
whole save grid whatever its spacing. On a log-spaced grid this gives every
decade the same share of reservoir dynamics.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from .errors import ShapeMismatch, ZeroSpectralRadius
from .integrators import RESERVOIR_OPTIONS, OdeProblem, SolveOptions, solve_explicit
from .timeseries import SplineSeries, Trajectory

ACTIVATIONS = {"tanh": np.tanh, "identity": lambda z: z}
DENSE_LIMIT = 64


@dataclass(frozen=True)
class ReservoirSpec:
    n_reservoir: int
    density: Optional[float] = None
    spectral_radius: float = 1.0
    input_scale: float = 1.0
    activation_f: str = "tanh"
    activation_g: str = "identity"
    seed: int = 0
    clock: str = "grid"
    clock_span: float = 8.0

    def __post_init__(self):
        if self.n_reservoir < 1:
            raise ValueError("n_reservoir must be >= 1")
        if self.density is None:
            n = self.n_reservoir
            object.__setattr__(self, "density", 0.01 if n >= 1000 else (1.0 if n <= 10 else 0.1))
        if not 0 < self.density <= 1:
            raise ValueError("density must lie in (0, 1]")
        if not self.spectral_radius > 0:
            raise ValueError("spectral_radius must be positive")
        if self.activation_f not in ACTIVATIONS:
            raise ValueError(f"activation_f must be one of {sorted(ACTIVATIONS)}")
        if self.activation_g != "identity":
            raise ValueError("activation_g must be 'identity'")
        if self.clock not in ("grid", "physical"):
            raise ValueError("clock must be 'grid' or 'physical'")
        if not self.clock_span > 0:
            raise ValueError("clock_span must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ReservoirSpec":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class ReservoirMatrices:
    A: object  # ndarray for small reservoirs, CSR otherwise
    W_hyb: np.ndarray
    r0: np.ndarray

    @property
    def n_reservoir(self) -> int:
        return self.W_hyb.shape[0]

    def dense_A(self) -> np.ndarray:
        return self.A.toarray() if sp.issparse(self.A) else np.asarray(self.A)


def spectral_radius(A, seed: int = 0) -> float:
    """Largest eigenvalue modulus; dense for small matrices, ARPACK otherwise."""
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        dense = A.toarray() if sp.issparse(A) else A
        return float(np.max(np.abs(np.linalg.eigvals(dense))))
    v0 = np.random.default_rng(seed).random(n) + 0.5
    try:
        vals = eigs(sp.csr_matrix(A), k=1, which="LM", v0=v0, return_eigenvectors=False, maxiter=20 * n, tol=1e-8)
    except ArpackNoConvergence as exc:
        vals = exc.eigenvalues
        if vals.size == 0:
            dense = A.toarray() if sp.issparse(A) else A
            return float(np.max(np.abs(np.linalg.eigvals(dense))))
    return float(np.max(np.abs(vals)))


def _draw_A(rng, n, density):
    nnz = max(1, int(round(density * n * n)))
    flat = np.sort(rng.choice(n * n, size=nnz, replace=False))
    rows, cols = np.divmod(flat, n)
    vals = rng.uniform(-1.0, 1.0, size=nnz)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def build_reservoir(spec: ReservoirSpec, n_inputs: int) -> ReservoirMatrices:
    """Seeded sparse ``A`` rescaled to ``spec.spectral_radius`` and dense ``W_hyb``.

    An all-zero-spectrum draw (possible for tiny, very sparse reservoirs) is
    retried once with a derived seed before :class:`ZeroSpectralRadius`.
    """
    if n_inputs < 1:
        raise ValueError("n_inputs must be >= 1")
    n = spec.n_reservoir
    for attempt in range(2):
        rng = np.random.default_rng([spec.seed, attempt])
        A = _draw_A(rng, n, spec.density)
        rho = spectral_radius(A, seed=spec.seed)
        if rho > 1e-12:
            break
    else:
        raise ZeroSpectralRadius(f"reservoir draw with N_R={n}, density={spec.density} has zero spectrum")
    A = A * (spec.spectral_radius / rho)
    W_hyb = rng.uniform(-spec.input_scale, spec.input_scale, size=(n, n_inputs))
    if n <= DENSE_LIMIT:
        A = A.toarray()
    return ReservoirMatrices(A, W_hyb, np.zeros(n))


class ReservoirClock:
    """Monotone map between model time and reservoir time."""

    def __init__(self, knots_t, kind: str = "grid", span: float = 1.0):
        self.knots_t = np.asarray(knots_t, dtype=float)
        self.kind = kind
        self.span = float(span)
        if kind == "physical":
            self.knots_s = self.knots_t - self.knots_t[0]
        else:
            self.knots_s = np.linspace(0.0, span, self.knots_t.size)

    def to_clock(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "physical":
            return t - self.knots_t[0]
        return np.interp(t, self.knots_t, self.knots_s)


class InputScaler:
    """Per-variable affine map of a reference trajectory onto [-1, 1].

    A variable whose range is at the rounding level of its magnitude is
    treated as constant: it maps to 0 and unscales to ``lower`` exactly.
    """

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        self.upper = upper
        width = upper - self.lower
        noise = 64 * np.finfo(float).eps * np.maximum(np.abs(self.lower), np.abs(upper))
        self.degenerate = ~(width > noise)
        self.width = np.where(self.degenerate, 1.0, width)

    @classmethod
    def fit(cls, values) -> "InputScaler":
        values = np.asarray(values, dtype=float)
        return cls(values.min(axis=0), values.max(axis=0))

    def scale(self, x):
        z = 2.0 * (np.asarray(x) - self.lower) / self.width - 1.0
        return np.where(self.degenerate, 0.0, z)

    def unscale(self, z):
        return np.where(self.degenerate, self.lower, self.lower + (np.asarray(z) + 1.0) * self.width / 2.0)

    def to_dict(self):
        # the stored bounds rebuild the same width bit for bit
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["lower"], d["upper"])


class _ReservoirRhs:
    def __init__(self, mats: ReservoirMatrices, driver: SplineSeries, f):
        self.A = mats.A
        self.W = mats.W_hyb
        self.poly = driver._spline
        self.lo, self.hi = driver.domain
        self.f = f

    def __call__(self, r, p, s):
        x = self.poly(min(max(s, self.lo), self.hi))
        return self.f(self.A @ r + self.W @ x)


def simulate_reservoir(
    mats: ReservoirMatrices, driver: SplineSeries, spec: ReservoirSpec, tspan, saveat,
    opts: SolveOptions = RESERVOIR_OPTIONS,
) -> Trajectory:
    """Integrate the reservoir from ``r0`` with the explicit solver.

    ``driver`` is a spline of the scaled reference trajectory in the same time
    coordinate as ``tspan`` and ``saveat`` (reservoir clock time).
    """
    if driver.n_vars != mats.W_hyb.shape[1]:
        raise ShapeMismatch(f"driver has {driver.n_vars} variables, W_hyb expects {mats.W_hyb.shape[1]}")
    rhs = _ReservoirRhs(mats, driver, ACTIVATIONS[spec.activation_f])
    labels = tuple(f"r{i}" for i in range(mats.n_reservoir))
    prob = OdeProblem(rhs, mats.r0, tuple(tspan), labels=labels)
    return solve_explicit(prob, opts.replace(saveat=saveat))


def svd_least_squares(R, X, rcond: float = 1e-10) -> np.ndarray:
    """Minimum-norm least-squares readout ``W_out`` with ``W_out R(t) ~ X(t)``.

    ``R`` is (n_t x N_R) reservoir states, ``X`` (n_t x N) targets; returns
    ``W_out`` of shape (N x N_R), i.e. ``W_out^T = pinv(R) X`` with singular
    values below ``rcond * sigma_max`` discarded.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if R.shape[0] != X.shape[0]:
        raise ShapeMismatch(f"R has {R.shape[0]} rows, X has {X.shape[0]}")
    return (np.linalg.pinv(R, rcond=rcond) @ X).T
