"""CTESN surrogate training, prediction and validation.

Both variants share one reservoir trajectory, simulated once while driven by
the reference solution at the center ``p*`` of the parameter box.

* LP: per training point a linear readout ``W_out`` (via SVD) from the
  reservoir state plus a constant feature to the scaled outputs; an RBF maps
  parameters to ``vec(W_out)`` (row-major, one row per output).
* NP: per training point an RBF regression from reservoir state to scaled
  outputs over a fixed set of centers picked on the ``p*`` reservoir
  trajectory; its stacked coefficients ``beta`` are mapped from parameters by
  a second RBF.

Prediction never solves the full model.
"""

from __future__ import annotations

import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .errors import CenterSelectionFailed, ExtrapolationWarning, NumericalFailure, TrainingDiverged
from .models import ParametrizedModel
from .rbf import DEFAULT_RIDGE, RbfInterpolant, farthest_point_centers, fit_rbf, fit_rbf_regression
from .reservoir import (
    InputScaler,
    ReservoirClock,
    ReservoirSpec,
    build_reservoir,
    simulate_reservoir,
    svd_least_squares,
)
from .sampling import ParameterSpace, latin_hypercube, sobol_sample
from .timeseries import NORMALIZATION, SplineSeries, Trajectory, relative_error_series

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainOptions:
    n_train: int = 100
    seed: int = 0
    rcond: float = 1e-10
    kernel: str = "thin-plate"
    ridge: float = DEFAULT_RIDGE
    n_centers: int = 32
    jobs: int = 1


@dataclass(eq=False)
class TrainedSurrogate:
    variant: str
    spec: ReservoirSpec
    space: ParameterSpace
    p_star: np.ndarray
    labels: tuple
    save_times: np.ndarray
    reservoir_states: np.ndarray
    scaler: InputScaler
    param_map: RbfInterpolant
    np_centers: Optional[np.ndarray] = None
    np_lower: Optional[np.ndarray] = None
    np_width: Optional[np.ndarray] = None
    kernel: str = "thin-plate"
    error_grid: str = "linear"
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("p_star", "save_times", "reservoir_states", "np_centers", "np_lower", "np_width"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, np.ascontiguousarray(value, dtype=float))
        self.clock = ReservoirClock(self.save_times, self.spec.clock, self.spec.clock_span)
        self._reservoir = SplineSeries(Trajectory(self.clock.knots_s, self.reservoir_states))
        self._basis_cache = {}

    @property
    def n_outputs(self) -> int:
        return len(self.labels)

    @property
    def n_reservoir(self) -> int:
        return self.spec.n_reservoir

    def reservoir_at(self, times) -> np.ndarray:
        """Reservoir states at model times (exact at the save grid)."""
        times = np.asarray(times, dtype=float)
        if times.shape == self.save_times.shape and np.array_equal(times, self.save_times):
            return self.reservoir_states
        return self._reservoir(self.clock.to_clock(np.clip(times, self.save_times[0], self.save_times[-1])))

    def features(self, times) -> np.ndarray:
        """Design matrix the readout acts on at ``times``."""
        R = self.reservoir_at(times)
        if self.variant == "LP":
            return np.hstack([R, np.ones((R.shape[0], 1))])
        return _np_readout(self, np.zeros((1, 1))).basis(R)

    def coefficients(self, p) -> np.ndarray:
        """Readout coefficients at ``p``: ``W_out`` (N x (N_R + 1)) or ``beta``."""
        flat = self.param_map(np.asarray(p, dtype=float))
        if self.variant == "LP":
            return flat.reshape(self.n_outputs, self.n_reservoir + 1)
        return flat.reshape(-1, self.n_outputs)

    def predict(self, p, times=None) -> Trajectory:
        if self.variant == "LP":
            return predict_lp(self, p, times)
        return predict_np(self, p, times)


def _np_readout(surr: TrainedSurrogate, beta: np.ndarray) -> RbfInterpolant:
    return RbfInterpolant(surr.np_centers, beta, surr.kernel, 1.0, surr.np_lower, surr.np_width, 0.0)


def _cached_features(surr: TrainedSurrogate, times) -> np.ndarray:
    key = None
    if times is None:
        key = "save"
        times = surr.save_times
    if key and key in surr._basis_cache:
        return surr._basis_cache[key]
    F = surr.features(times)
    if key:
        surr._basis_cache[key] = F
    return F


def _check_extrapolation(surr: TrainedSurrogate, p) -> bool:
    outside = not surr.space.contains(p, rtol=1e-12)
    if outside:
        warnings.warn(f"parameter {np.asarray(p).tolist()} lies outside the trained box", ExtrapolationWarning, stacklevel=3)
    return outside


def predict_lp(surr: TrainedSurrogate, p, times=None) -> Trajectory:
    """``x(t) = g(W_out(p) [r(t); 1])`` with ``W_out(p)`` from the parameter RBF."""
    if surr.variant != "LP":
        raise ValueError("predict_lp needs an LP surrogate")
    outside = _check_extrapolation(surr, p)
    F = _cached_features(surr, times)
    W = surr.coefficients(p)
    x = surr.scaler.unscale(F @ W.T)
    return Trajectory(surr.save_times if times is None else times, x, surr.labels, outside)


def predict_np(surr: TrainedSurrogate, p, times=None) -> Trajectory:
    """``x(t) = rbf(beta(p))(r(t))`` with ``beta(p)`` from the parameter RBF."""
    if surr.variant != "NP":
        raise ValueError("predict_np needs an NP surrogate")
    outside = _check_extrapolation(surr, p)
    F = _cached_features(surr, times)
    beta = surr.coefficients(p)
    x = surr.scaler.unscale(F @ beta)
    return Trajectory(surr.save_times if times is None else times, x, surr.labels, outside)


def _solve_point(model: ParametrizedModel, p):
    start = time.perf_counter()
    try:
        traj = model.simulate(p)
    except NumericalFailure as exc:
        return None, str(exc), time.perf_counter() - start
    return traj.values, None, time.perf_counter() - start


def solve_many(model: ParametrizedModel, points, jobs: int = 1):
    """Reference solves at every row of ``points``; results are in input order.

    Returns (values, errors, wall_times), where ``values[i]`` is None when the
    solve at ``points[i]`` failed and ``errors[i]`` carries the message.
    """
    points = [np.asarray(p, dtype=float) for p in points]
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_point, [model] * len(points), points, chunksize=max(1, len(points) // (4 * jobs))))
    else:
        results = [_solve_point(model, p) for p in points]
    return [r[0] for r in results], [r[1] for r in results], [r[2] for r in results]


def _reference_data(model, space, opts: TrainOptions):
    if opts.n_train < space.dim + 2:
        raise ValueError(f"n_train must be >= d + 2 = {space.dim + 2}, got {opts.n_train}")
    p_star = space.center()
    start = time.perf_counter()
    x_star = model.simulate(p_star)
    points = latin_hypercube(space, opts.n_train, opts.seed)
    values, errors, _ = solve_many(model, points, opts.jobs)
    for p, err in zip(points, errors):
        if err is not None:
            raise TrainingDiverged(f"reference solve failed at p={p.tolist()}: {err}", point=p)
    log.info("%d reference solves in %.2fs", opts.n_train + 1, time.perf_counter() - start)
    return p_star, x_star, points, np.array(values)


def _reservoir_trajectory(spec: ReservoirSpec, x_star: Trajectory, scaler: InputScaler):
    clock = ReservoirClock(x_star.times, spec.clock, spec.clock_span)
    driver = SplineSeries(Trajectory(clock.knots_s, scaler.scale(x_star.values)))
    mats = build_reservoir(spec, x_star.n_vars)
    s = clock.knots_s
    return simulate_reservoir(mats, driver, spec, (s[0], s[-1]), s).values


def train_lpctesn(model: ParametrizedModel, space: ParameterSpace, spec: ReservoirSpec, opts: TrainOptions = TrainOptions()) -> TrainedSurrogate:
    """Train a linear-projection CTESN over ``space``."""
    p_star, x_star, points, X = _reference_data(model, space, opts)
    scaler = InputScaler.fit(x_star.values)
    R = _reservoir_trajectory(spec, x_star, scaler)
    F = np.hstack([R, np.ones((R.shape[0], 1))])
    W = np.array([svd_least_squares(F, scaler.scale(x), opts.rcond) for x in X])
    residuals = [float(np.linalg.norm(F @ w.T - scaler.scale(x))) for w, x in zip(W, X)]
    param_map = fit_rbf(points, W.reshape(len(points), -1), opts.kernel, opts.ridge)
    return TrainedSurrogate(
        "LP", spec, space, p_star, model.output_labels, x_star.times, R, scaler, param_map,
        kernel=opts.kernel, error_grid=model.error_grid,
        train_meta=_meta(model, opts, points, residuals),
    )


def train_npctesn(model: ParametrizedModel, space: ParameterSpace, spec: ReservoirSpec, opts: TrainOptions = TrainOptions()) -> TrainedSurrogate:
    """Train a nonlinear-projection CTESN over ``space``."""
    p_star, x_star, points, X = _reference_data(model, space, opts)
    scaler = InputScaler.fit(x_star.values)
    R = _reservoir_trajectory(spec, x_star, scaler)
    idx = farthest_point_centers(R, opts.n_centers)
    if idx.size < spec.n_reservoir + 2:
        raise CenterSelectionFailed(
            f"only {idx.size} distinct reservoir states for {opts.n_centers} centers (N_R={spec.n_reservoir})"
        )
    centers = R[idx]
    lower = R.min(axis=0)
    width = R.max(axis=0) - lower
    width = np.where(width > 0, width, 1.0)
    betas, residuals = [], []
    for x in X:
        target = scaler.scale(x)
        fit = fit_rbf_regression(centers, R, target, opts.kernel, opts.ridge, lower=lower, width=width)
        betas.append(fit.weights)
        residuals.append(float(np.linalg.norm(fit.basis(R) @ fit.weights - target)))
    betas = np.array(betas)
    param_map = fit_rbf(points, betas.reshape(len(points), -1), opts.kernel, opts.ridge)
    return TrainedSurrogate(
        "NP", spec, space, p_star, model.output_labels, x_star.times, R, scaler, param_map,
        np_centers=centers, np_lower=lower, np_width=width, kernel=opts.kernel,
        error_grid=model.error_grid, train_meta=_meta(model, opts, points, residuals),
    )


def train(model, space, spec, opts: TrainOptions = TrainOptions(), variant: str = "NP") -> TrainedSurrogate:
    if variant == "LP":
        return train_lpctesn(model, space, spec, opts)
    if variant == "NP":
        return train_npctesn(model, space, spec, opts)
    raise ValueError(f"variant must be 'LP' or 'NP', got {variant!r}")


def _meta(model, opts: TrainOptions, points, residuals) -> dict:
    # no wall-clock numbers here: artifacts must be byte-identical across reruns
    return {
        "model": model.name,
        "n_train": int(opts.n_train),
        "lhs_seed": int(opts.seed),
        "rcond": float(opts.rcond),
        "ridge": float(opts.ridge),
        "n_centers": int(opts.n_centers),
        "train_points": np.asarray(points).tolist(),
        "train_residuals": [float(r) for r in residuals],
        "version": __version__,
    }


@dataclass
class DiagnosticReport:
    """Accuracy, coverage and performance summary of a trained surrogate.

    Error figures are percentages. ``avg_rel_err`` is the mean over test
    points of the time-and-output averaged relative error; the histogram bins
    the per-point mean (over outputs) of the max-over-time error.
    """

    variant: str
    n_reservoir: int
    labels: list
    max_rel_err_pct: dict
    avg_rel_err_pct: dict
    avg_rel_err: float
    histogram_edges: list
    histogram_counts: list
    space: dict
    n_train: int
    n_test: int
    seeds: dict
    full_time_s: float
    predict_time_s: float
    speedup: float
    error_grid: str
    n_error_points: int
    normalization: str = NORMALIZATION
    kernel: str = "thin-plate"
    clock: str = "grid"
    tool_version: str = __version__
    per_point_avg_err: list = field(default_factory=list)
    per_point_mean_max_err: list = field(default_factory=list)
    test_points: list = field(default_factory=list)
    worst_point: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticReport":
        return cls(**d)


def _time_call(fn, *args, repeat: int = 1):
    best = np.inf
    out = None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return out, best


def validate_surrogate(
    surr: TrainedSurrogate, model: ParametrizedModel, n_test: int = 100, n_error_points: int = 1000,
    jobs: int = 1, n_bins: int = 10, keep_traces: bool = False,
):
    """Compare surrogate and full model at ``n_test`` Sobol points.

    Returns the :class:`DiagnosticReport`; with ``keep_traces=True`` returns
    ``(report, truths, predictions)`` as well.
    """
    if model.n_outputs != surr.n_outputs:
        raise ValueError(f"model has {model.n_outputs} outputs, surrogate {surr.n_outputs}")
    points = sobol_sample(surr.space, n_test)
    values, errors, full_times = solve_many(model, points, jobs)
    for p, err in zip(points, errors):
        if err is not None:
            raise TrainingDiverged(f"validation solve failed at p={p.tolist()}: {err}", point=p)
    grid = surr.error_grid
    per_max, per_avg, pred_times, truths, preds = [], [], [], [], []
    for p, v in zip(points, values):
        pred, dt = _time_call(surr.predict, p, repeat=3)
        truth = Trajectory(surr.save_times, v, surr.labels)
        err = relative_error_series(pred, truth, n_error_points, grid)
        per_max.append(err.max(axis=0))
        per_avg.append(err.mean(axis=0))
        pred_times.append(dt)
        if keep_traces:
            truths.append(truth)
            preds.append(pred)
    per_max = 100 * np.array(per_max)
    per_avg = 100 * np.array(per_avg)
    mean_max = per_max.mean(axis=1)
    counts, edges = np.histogram(mean_max, bins=n_bins)
    full_t = float(np.mean(full_times))
    pred_t = float(np.mean(pred_times))
    report = DiagnosticReport(
        variant=surr.variant,
        n_reservoir=surr.n_reservoir,
        labels=list(surr.labels),
        max_rel_err_pct={lab: float(v) for lab, v in zip(surr.labels, per_max.max(axis=0))},
        avg_rel_err_pct={lab: float(v) for lab, v in zip(surr.labels, per_avg.mean(axis=0))},
        avg_rel_err=float(per_avg.mean()),
        histogram_edges=edges.tolist(),
        histogram_counts=counts.tolist(),
        space=surr.space.to_dict(),
        n_train=int(surr.train_meta.get("n_train", 0)),
        n_test=int(n_test),
        seeds={"reservoir": int(surr.spec.seed), "lhs": int(surr.train_meta.get("lhs_seed", 0))},
        full_time_s=full_t,
        predict_time_s=pred_t,
        speedup=full_t / pred_t if pred_t > 0 else float("inf"),
        error_grid=grid,
        n_error_points=int(n_error_points),
        kernel=surr.kernel,
        clock=surr.spec.clock,
        per_point_avg_err=per_avg.mean(axis=1).tolist(),
        per_point_mean_max_err=mean_max.tolist(),
        test_points=points.tolist(),
        worst_point=int(np.argmax(mean_max)),
        notes=[
            "test points: unscrambled Sobol sequence from index 1",
            "RBF: thin-plate kernel, linear tail, inputs scaled to the unit box",
        ],
    )
    if keep_traces:
        return report, truths, preds
    return report
