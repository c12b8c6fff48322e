"""Vector-valued radial basis function interpolation with a linear tail.

Inputs are mapped affinely to the unit box (per dimension, from the bounding
box of the fitting inputs) before any distance is computed. The interpolant is

    s(x) = sum_i w_i phi(||u(x) - u(c_i)||) + a_0 + a^T u(x)

with the tail orthogonality constraint ``P^T w = 0`` on the centers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.spatial.distance import cdist

from .errors import ShapeMismatch, SingularSystem

KERNELS = ("thin-plate", "gaussian", "inverse-multiquadric")
DEFAULT_RIDGE = 1e-10


def kernel_matrix(r: np.ndarray, kernel: str, epsilon: float = 1.0) -> np.ndarray:
    if kernel == "thin-plate":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = r * r * np.log(r)
        out[r == 0] = 0.0
        return out
    if kernel == "gaussian":
        return np.exp(-((epsilon * r) ** 2))
    if kernel == "inverse-multiquadric":
        return 1.0 / np.sqrt(1.0 + (epsilon * r) ** 2)
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def _tail(u: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((u.shape[0], 1)), u])


@dataclass(frozen=True, eq=False)
class RbfInterpolant:
    """A fitted RBF map from R^d_in to R^d_out.

    ``weights`` has ``k + d_in + 1`` rows: one per center, then the constant
    and linear tail coefficients (the tail acts on normalised coordinates).
    """

    centers: np.ndarray
    weights: np.ndarray
    kernel: str
    epsilon: float
    lower: np.ndarray
    width: np.ndarray
    ridge: float

    def __post_init__(self):
        # one memory layout whatever the producer (solver output or JSON), so
        # evaluation takes the same BLAS path and rounds identically
        for name in ("centers", "weights", "lower", "width"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))

    @property
    def d_in(self) -> int:
        return self.centers.shape[1]

    @property
    def d_out(self) -> int:
        return self.weights.shape[1]

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]

    def normalize(self, x) -> np.ndarray:
        return (np.atleast_2d(np.asarray(x, dtype=float)) - self.lower) / self.width

    def basis(self, x) -> np.ndarray:
        """Design matrix ``[Phi(x, centers) | 1 | u(x)]`` for points ``x``."""
        u = self.normalize(x)
        cu = (self.centers - self.lower) / self.width
        phi = kernel_matrix(cdist(u, cu), self.kernel, self.epsilon)
        return np.hstack([phi, _tail(u)])

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.basis(x) @ self.weights
        return out[0] if x.ndim == 1 else out

    def outside(self, x, rtol: float = 1e-9) -> bool:
        """True when ``x`` lies outside the bounding box of the fitting inputs."""
        u = self.normalize(x)
        return bool(np.any(u < -rtol) or np.any(u > 1 + rtol))

    def rbf_weights(self) -> np.ndarray:
        return self.weights[: self.n_centers]

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "weights": self.weights.tolist(),
            "kernel": self.kernel,
            "epsilon": float(self.epsilon),
            "lower": self.lower.tolist(),
            "width": self.width.tolist(),
            "ridge": float(self.ridge),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RbfInterpolant":
        return cls(
            centers=np.asarray(d["centers"], dtype=float),
            weights=np.asarray(d["weights"], dtype=float),
            kernel=d["kernel"],
            epsilon=float(d["epsilon"]),
            lower=np.asarray(d["lower"], dtype=float),
            width=np.asarray(d["width"], dtype=float),
            ridge=float(d["ridge"]),
        )


def _normalization(X: np.ndarray):
    lower = X.min(axis=0)
    width = X.max(axis=0) - lower
    width = np.where(width > 0, width, 1.0)
    return lower, width


def _closest_pair(u: np.ndarray):
    d = cdist(u, u)
    np.fill_diagonal(d, np.inf)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    return (int(min(i, j)), int(max(i, j))), float(d[i, j])


def fit_rbf(X, Y, kernel: str = "thin-plate", ridge: float = DEFAULT_RIDGE, epsilon: float = 1.0) -> RbfInterpolant:
    """Interpolate ``Y`` (k x d_out) at centers ``X`` (k x d_in).

    Solves the saddle-point system

        [Phi + ridge*I  P] [w]   [Y]
        [P^T            0] [a] = [0]

    in normalised coordinates.

    Raises:
        ShapeMismatch: row counts differ, or fewer than ``d_in + 2`` rows.
        SingularSystem: duplicate (or near-duplicate) centers, or a singular
            system; ``err.pair`` names the closest pair of centers.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    k, d = X.shape
    if Y.shape[0] != k:
        raise ShapeMismatch(f"X has {k} rows, Y has {Y.shape[0]}")
    if k < d + 2:
        raise ShapeMismatch(f"need at least d_in + 2 = {d + 2} centers, got {k}")
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")

    lower, width = _normalization(X)
    u = (X - lower) / width
    pair, dmin = _closest_pair(u)
    if dmin < 1e-10:
        raise SingularSystem(f"centers {pair[0]} and {pair[1]} coincide (distance {dmin:.3g})", pair)

    phi = kernel_matrix(cdist(u, u), kernel, epsilon) + ridge * np.eye(k)
    P = _tail(u)
    m = P.shape[1]
    lhs = np.zeros((k + m, k + m))
    lhs[:k, :k] = phi
    lhs[:k, k:] = P
    lhs[k:, :k] = P.T
    rhs = np.vstack([Y, np.zeros((m, Y.shape[1]))])
    cond = np.linalg.cond(lhs)
    if not np.isfinite(cond) or cond > 1e15:
        raise SingularSystem(
            f"RBF system is singular (condition {cond:.3g}); closest centers {pair} at distance {dmin:.3g}", pair
        )
    weights = lu_solve(lu_factor(lhs, check_finite=False), rhs, check_finite=False)
    return RbfInterpolant(X.copy(), weights, kernel, float(epsilon), lower, width, float(ridge))


def fit_rbf_regression(
    centers, X, Y, kernel: str = "thin-plate", ridge: float = DEFAULT_RIDGE, epsilon: float = 1.0,
    lower=None, width=None, rcond: float = 1e-12,
) -> RbfInterpolant:
    """Least-squares RBF fit of ``Y`` at points ``X`` using fixed ``centers``.

    The RBF weights are restricted to the null space of ``P(centers)^T`` so the
    result has the same structure as an interpolant. ``ridge`` penalises the
    squared norm of the RBF weights. ``lower``/``width`` fix the input
    normalisation (default: bounding box of ``centers``), which makes
    coefficient vectors from different fits comparable.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0] or X.shape[1] != centers.shape[1]:
        raise ShapeMismatch("inconsistent shapes for centers, X and Y")
    k, d = centers.shape
    if lower is None:
        lower, width = _normalization(centers)
    cu = (centers - lower) / width
    u = (X - lower) / width
    Pc = _tail(cu)
    # null-space basis of Pc^T (k x (k - d - 1))
    q, _ = np.linalg.qr(Pc, mode="complete")
    Z = q[:, d + 1 :]
    A = np.hstack([kernel_matrix(cdist(u, cu), kernel, epsilon) @ Z, _tail(u)])
    if ridge > 0:
        reg = np.zeros((Z.shape[1], A.shape[1]))
        reg[:, : Z.shape[1]] = np.sqrt(ridge) * np.eye(Z.shape[1])
        A = np.vstack([A, reg])
        Y = np.vstack([Y, np.zeros((Z.shape[1], Y.shape[1]))])
    sol, *_ = np.linalg.lstsq(A, Y, rcond=rcond)
    w = Z @ sol[: Z.shape[1]]
    weights = np.vstack([w, sol[Z.shape[1] :]])
    return RbfInterpolant(centers.copy(), weights, kernel, float(epsilon), np.asarray(lower, float), np.asarray(width, float), float(ridge))


def eval_rbf(m: RbfInterpolant, x) -> np.ndarray:
    return m(x)


def farthest_point_centers(points, n: int, start: int = 0) -> np.ndarray:
    """Indices of ``n`` points chosen greedily to maximise the minimum distance.

    Distances are taken after scaling each coordinate to the unit interval.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lower, width = _normalization(points)
    u = (points - lower) / width
    n = min(n, points.shape[0])
    chosen = [start]
    dist = np.linalg.norm(u - u[start], axis=1)
    for _ in range(n - 1):
        nxt = int(np.argmax(dist))
        if dist[nxt] == 0:
            break
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(u - u[nxt], axis=1))
    return np.array(chosen)
