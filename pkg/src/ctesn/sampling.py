"""Box-bounded parameter spaces with Latin hypercube and Sobol designs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import DimensionUnsupported, ShapeMismatch

# scipy ships Joe-Kuo direction numbers for this many dimensions.
MAX_SOBOL_DIM = 21201


@dataclass(frozen=True)
class ParameterSpace:
    names: tuple
    lower: np.ndarray
    upper: np.ndarray
    scale: tuple = ()

    def __post_init__(self):
        names = tuple(self.names)
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        scale = tuple(self.scale) if self.scale else ("linear",) * len(names)
        if not (len(names) == lower.size == upper.size == len(scale)):
            raise ShapeMismatch("names, lower, upper and scale must have equal length")
        if np.any(~(lower < upper)):
            raise ValueError("lower < upper must hold in every dimension")
        for s, lo, name in zip(scale, lower, names):
            if s not in ("linear", "log"):
                raise ValueError(f"scale for {name!r} must be 'linear' or 'log'")
            if s == "log" and lo <= 0:
                raise ValueError(f"log-scaled dimension {name!r} needs a positive lower bound")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def _log(self) -> np.ndarray:
        return np.array([s == "log" for s in self.scale])

    def from_unit(self, u) -> np.ndarray:
        """Map points of the unit cube into the box (log dims geometrically)."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        lo, hi, log = self.lower, self.upper, self._log
        out = lo + u * (hi - lo)
        if np.any(log):
            out[:, log] = np.exp(np.log(lo[log]) + u[:, log] * (np.log(hi[log]) - np.log(lo[log])))
        return out

    def to_unit(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo, hi, log = self.lower, self.upper, self._log
        u = (x - lo) / (hi - lo)
        if np.any(log):
            u[:, log] = (np.log(x[:, log]) - np.log(lo[log])) / (np.log(hi[log]) - np.log(lo[log]))
        return u

    def center(self) -> np.ndarray:
        """Arithmetic center, geometric center along log dims."""
        return self.from_unit(np.full((1, self.dim), 0.5))[0]

    def contains(self, x, rtol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        slack = rtol * (self.upper - self.lower)
        return bool(np.all(x >= self.lower - slack) and np.all(x <= self.upper + slack))

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "lower": [float(v) for v in self.lower],
            "upper": [float(v) for v in self.upper],
            "scale": list(self.scale),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSpace":
        return cls(tuple(d["names"]), d["lower"], d["upper"], tuple(d.get("scale") or ()))


def latin_hypercube(space: ParameterSpace, n: int, seed: int) -> np.ndarray:
    """Random-in-stratum Latin hypercube of ``n`` points.

    Every dimension is split into ``n`` equal-probability strata (in log space
    for log dims); each stratum receives exactly one point, placed uniformly
    within it, with the stratum order drawn from a seeded permutation.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    d = space.dim
    jitter = rng.random((n, d))
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    u = (strata + jitter) / n
    # keep points strictly inside the box even for a jitter of exactly 0
    u = np.clip(u, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return space.from_unit(u)


def sobol_sample(space: ParameterSpace, n: int) -> np.ndarray:
    """First ``n`` points of the unscrambled Sobol sequence, skipping the origin."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if space.dim > MAX_SOBOL_DIM:
        raise DimensionUnsupported(f"Sobol directions available up to {MAX_SOBOL_DIM} dims, got {space.dim}")
    engine = qmc.Sobol(d=space.dim, scramble=False)
    m = int(np.ceil(np.log2(n + 1)))
    pts = engine.random_base2(m)[1 : n + 1]
    return space.from_unit(pts)
