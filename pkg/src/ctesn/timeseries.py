"""Sampled trajectories, natural cubic spline dense output and error metrics.

Relative errors are normalised per variable by the sup-norm of the reference
series over the evaluation grid (``NORMALIZATION`` below). Pointwise
normalisation is ill-defined for states that pass through zero, such as the
Robertson intermediate species.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateKnots, EmptyOverlap, ExtrapolationWarning, ShapeMismatch, ZeroSignalWarning

NORMALIZATION = "abs(pred - truth) / max_t abs(truth) per variable"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Multivariate time series sampled at strictly increasing times.

    Attributes:
        times: shape (n_times,)
        values: shape (n_times, n_vars)
        labels: one name per column of ``values``
        extrapolated: set by producers that evaluated outside a trained or
            fitted domain
    """

    times: np.ndarray
    values: np.ndarray
    labels: tuple = ()
    extrapolated: bool = False

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or times.size < 2:
            raise DegenerateKnots("a trajectory needs at least two sample times")
        if np.any(np.diff(times) <= 0):
            raise DegenerateKnots("trajectory times must be strictly increasing")
        if values.shape[0] != times.size:
            raise ShapeMismatch(f"{values.shape[0]} value rows for {times.size} times")
        if not np.all(np.isfinite(values)) or not np.all(np.isfinite(times)):
            raise ValueError("trajectory contains non-finite entries")
        labels = tuple(self.labels) if self.labels else tuple(f"x{i}" for i in range(values.shape[1]))
        if len(labels) != values.shape[1]:
            raise ShapeMismatch(f"{len(labels)} labels for {values.shape[1]} variables")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def column(self, label: str) -> np.ndarray:
        return self.values[:, self.labels.index(label)]

    def select(self, labels: Sequence[str]) -> "Trajectory":
        idx = [self.labels.index(lab) for lab in labels]
        return Trajectory(self.times, self.values[:, idx], tuple(labels), self.extrapolated)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.labels == other.labels
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )


class SplineSeries:
    """Natural cubic spline through every variable of a trajectory.

    Evaluation outside ``[t_first, t_last]`` clamps to the nearest endpoint
    and emits :class:`ExtrapolationWarning`.
    """

    def __init__(self, traj: Trajectory):
        self.knots = traj.times
        self.values = traj.values
        self.labels = traj.labels
        self._spline = CubicSpline(self.knots, self.values, axis=0, bc_type="natural")

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def __call__(self, t):
        """Evaluate at a scalar (-> shape (n_vars,)) or array of times (-> (n, n_vars))."""
        t_arr = np.asarray(t, dtype=float)
        lo, hi = self.knots[0], self.knots[-1]
        if np.any(t_arr < lo) or np.any(t_arr > hi):
            warnings.warn(
                f"spline evaluated outside [{lo:g}, {hi:g}]; clamped to the endpoint",
                ExtrapolationWarning,
                stacklevel=2,
            )
            t_arr = np.clip(t_arr, lo, hi)
        out = self._spline(t_arr)
        # hand back stored samples verbatim at the knots
        idx = np.clip(np.searchsorted(self.knots, t_arr), 0, self.knots.size - 1)
        hit = self.knots[idx] == t_arr
        if np.any(hit):
            out[hit] = self.values[idx[hit]]
        return out

    def derivative(self, t, nu: int = 1):
        return self._spline(np.clip(np.asarray(t, dtype=float), self.knots[0], self.knots[-1]), nu)

    def to_trajectory(self, times=None) -> Trajectory:
        if times is None:
            return Trajectory(self.knots, self.values, self.labels)
        return Trajectory(times, self(times), self.labels)


def fit_cubic_spline(traj: Trajectory) -> SplineSeries:
    """Natural cubic spline (zero second derivative at both ends) through ``traj``."""
    return SplineSeries(traj)


def eval_spline(s: SplineSeries, t) -> np.ndarray:
    return s(t)


def _as_spline(x: Union[Trajectory, SplineSeries]) -> SplineSeries:
    if isinstance(x, SplineSeries):
        return x
    if isinstance(x, Trajectory):
        return SplineSeries(x)
    raise TypeError(f"expected Trajectory or SplineSeries, got {type(x).__name__}")


def error_grid(lo: float, hi: float, n_points: int, grid: str = "linear", log_start: float | None = None):
    """Evaluation times over ``[lo, hi]``.

    ``grid="log"`` spaces points uniformly in log-time from ``log_start``
    (default: ``lo`` if positive) to ``hi``.
    """
    if grid == "linear":
        return np.linspace(lo, hi, n_points)
    if grid == "log":
        start = log_start if log_start is not None else lo
        if start <= 0 or start >= hi:
            raise EmptyOverlap(f"log grid needs 0 < start < {hi:g}, got {start:g}")
        times = np.geomspace(max(start, lo), hi, n_points)
        times[-1] = hi
        return times
    raise ValueError(f"unknown grid {grid!r}")


def _first_positive(s: SplineSeries) -> float:
    positive = s.knots[s.knots > 0]
    return float(positive[0]) if positive.size else float(s.knots[0])


def relative_error_series(pred, truth, n_points: int = 1000, grid: str = "linear") -> np.ndarray:
    """Per-variable relative error on ``n_points`` evaluation times.

    ``err[j, v] = |pred_v(t_j) - truth_v(t_j)| / max_j |truth_v(t_j)|``, as a
    fraction (multiply by 100 for percent). Both arguments are spline-evaluated
    over their common domain. A reference variable that is identically zero
    falls back to absolute error with a :class:`ZeroSignalWarning`.
    """
    return relative_error_trajectory(pred, truth, n_points, grid).values


def relative_error_trajectory(pred, truth, n_points: int = 1000, grid: str = "linear") -> Trajectory:
    """Same as :func:`relative_error_series` but keeps the evaluation times."""
    ps, ts = _as_spline(pred), _as_spline(truth)
    if ps.n_vars != ts.n_vars:
        raise ShapeMismatch(f"prediction has {ps.n_vars} variables, reference has {ts.n_vars}")
    lo = max(ps.domain[0], ts.domain[0])
    hi = min(ps.domain[1], ts.domain[1])
    if not hi > lo:
        raise EmptyOverlap(f"no common time domain: {ps.domain} vs {ts.domain}")
    log_start = max(_first_positive(ts), lo) if grid == "log" else None
    times = error_grid(lo, hi, n_points, grid, log_start)
    p, t = ps(times), ts(times)
    scale = np.max(np.abs(t), axis=0)
    zero = scale == 0
    if np.any(zero):
        warnings.warn(
            f"zero reference signal for variables {np.flatnonzero(zero).tolist()}; using absolute error",
            ZeroSignalWarning,
            stacklevel=3,
        )
        scale = np.where(zero, 1.0, scale)
    return Trajectory(times, np.abs(p - t) / scale, ts.labels)


def max_rel_error(pred, truth, n_points: int = 1000, grid: str = "linear") -> np.ndarray:
    return relative_error_series(pred, truth, n_points, grid).max(axis=0)


def avg_rel_error(pred, truth, n_points: int = 1000, grid: str = "linear") -> float:
    return float(relative_error_series(pred, truth, n_points, grid).mean())


def write_csv(traj: Trajectory, path) -> None:
    """Write ``t,<labels...>`` rows with shortest round-trip float formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", *traj.labels])
        for t, row in zip(traj.times, traj.values):
            writer.writerow([repr(float(t)), *(repr(float(v)) for v in row)])


def read_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError(f"{path}: first column must be 't'")
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.array(rows, dtype=float)
    return Trajectory(data[:, 0], data[:, 1:], tuple(header[1:]))
