"""Differential evolution and the average-COP objective.

The optimizer is DE/rand/1/bin with a per-mutation jittered weight, seeded
Latin hypercube initialisation and reflection at the box faces. It can drive
either a full model or a trained surrogate through the same objective.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import BudgetTooSmall, CtesnError, MissingOutputLabel
from .sampling import ParameterSpace, latin_hypercube
from .timeseries import SplineSeries, Trajectory

COOLING_LABELS = ("Q_tot", "Q_c")
CSP_FLOOR = 0.01


def average_cop(traj: Trajectory, N_t: int = 720) -> float:
    """Mean of ``Q_tot / max(0.01, CSP)`` at ``N_t`` uniform times.

    The cooling series is looked up as ``Q_tot`` and then ``Q_c``.
    """
    cooling = next((lab for lab in COOLING_LABELS if lab in traj.labels), None)
    if cooling is None:
        raise MissingOutputLabel(f"trajectory has no cooling output (one of {COOLING_LABELS})")
    if "CSP" not in traj.labels:
        raise MissingOutputLabel("trajectory has no CSP output")
    spline = SplineSeries(traj.select([cooling, "CSP"]))
    t = np.linspace(traj.times[0], traj.times[-1], N_t)
    q, csp = spline(t).T
    return float(np.mean(q / np.maximum(CSP_FLOOR, csp)))


@dataclass(frozen=True)
class DeConfig:
    """Differential evolution settings.

    ``F`` is the centre of the jitter window: each mutation draws its weight
    uniformly from ``[F - 0.2, F + 0.3]`` (``[0.5, 1.0]`` at the default).
    With ``target_tolerance`` set, the run stops once the best value improved
    by less than that amount over ``patience`` generations.
    """

    population: int = 50
    max_evals: int = 5000
    F: float = 0.7
    CR: float = 0.9
    seed: int = 0
    target_tolerance: Optional[float] = None
    patience: int = 10
    jobs: int = 1

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be >= 4")
        if not 0 < self.CR <= 1:
            raise ValueError("CR must lie in (0, 1]")
        if not 0 < self.F < 2:
            raise ValueError("F must lie in (0, 2)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def replace(self, **kw) -> "DeConfig":
        return replace(self, **kw)

    @property
    def f_window(self):
        return max(1e-3, self.F - 0.2), min(1.999, self.F + 0.3)


@dataclass(eq=False)
class OptResult:
    best_point: np.ndarray
    best_value: float
    history: list  # (eval_count, wall_time_s, best_so_far)
    evals_used: int
    wall_time_s: float = 0.0
    full_value: Optional[float] = None
    full_history: list = field(default_factory=list)  # (eval_count, full-model objective)
    reevaluation_time_s: float = 0.0
    mode: str = "model"
    history_points: list = field(default_factory=list)

    def to_dict(self, timings: bool = False) -> dict:
        """JSON-ready dict; wall-clock fields only with ``timings=True``."""
        d = {
            "mode": self.mode,
            "best_point": [float(v) for v in self.best_point],
            "best_value": float(self.best_value),
            "evals_used": int(self.evals_used),
            "history": [[int(n), float(b)] for n, _, b in self.history],
            "full_value": None if self.full_value is None else float(self.full_value),
            "full_history": [[int(n), float(v)] for n, v in self.full_history],
            "history_points": [[float(v) for v in p] for p in self.history_points],
        }
        if timings:
            d["history_wall_time_s"] = [float(w) for _, w, _ in self.history]
            d["wall_time_s"] = float(self.wall_time_s)
            d["reevaluation_time_s"] = float(self.reevaluation_time_s)
        return d


def _reflect(x, lo, hi):
    width = hi - lo
    y = np.mod(x - lo, 2 * width)
    y = np.where(y > width, 2 * width - y, y)
    return lo + y


def _safe(objective, x) -> float:
    try:
        v = float(objective(x))
    except (CtesnError, ArithmeticError, ValueError):
        return np.inf
    return v if np.isfinite(v) else np.inf


class _Evaluator:
    def __init__(self, objective, jobs):
        self.objective = objective
        self.pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None

    def __call__(self, X) -> np.ndarray:
        if self.pool is None:
            return np.array([_safe(self.objective, x) for x in X])
        return np.array(list(self.pool.map(_safe, [self.objective] * len(X), X)))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def differential_evolution(objective: Callable, space: ParameterSpace, cfg: DeConfig = DeConfig()) -> OptResult:
    """Minimise ``objective`` over the box ``space``.

    Objective failures (package errors, non-finite values) count as ``+inf``.
    """
    if cfg.max_evals < cfg.population:
        raise BudgetTooSmall(f"max_evals={cfg.max_evals} is below the population size {cfg.population}")
    rng = np.random.default_rng(cfg.seed)
    lo, hi = space.lower, space.upper
    n, d = cfg.population, space.dim
    f_lo, f_hi = cfg.f_window
    evaluate = _Evaluator(objective, cfg.jobs)
    start = time.perf_counter()
    try:
        pop = latin_hypercube(space, n, int(rng.integers(2**32)))
        fit = evaluate(pop)
        evals = n
        best = int(np.argmin(fit))
        history = [(evals, time.perf_counter() - start, float(fit[best]))]
        points = [pop[best].copy()]
        gen_best = [float(fit[best])]
        while evals + n <= cfg.max_evals:
            trial = np.empty_like(pop)
            for i in range(n):
                a, b, c = rng.choice([j for j in range(n) if j != i], size=3, replace=False)
                F = rng.uniform(f_lo, f_hi)
                mutant = _reflect(pop[a] + F * (pop[b] - pop[c]), lo, hi)
                cross = rng.random(d) < cfg.CR
                cross[rng.integers(d)] = True
                trial[i] = np.where(cross, mutant, pop[i])
            tfit = evaluate(trial)
            evals += n
            # ties keep the incumbent; members are compared index by index
            better = tfit < fit
            pop[better] = trial[better]
            fit[better] = tfit[better]
            b = int(np.argmin(fit))
            if fit[b] < history[-1][2]:
                history.append((evals, time.perf_counter() - start, float(fit[b])))
                points.append(pop[b].copy())
            best = b
            gen_best.append(float(fit[b]))
            if (
                cfg.target_tolerance is not None
                and len(gen_best) > cfg.patience
                and gen_best[-cfg.patience - 1] - gen_best[-1] < cfg.target_tolerance
            ):
                break
    finally:
        evaluate.close()
    return OptResult(pop[best].copy(), float(fit[best]), history, evals, time.perf_counter() - start, history_points=points)


class CopObjective:
    """``-average_cop`` of a model or surrogate run at ``p`` (picklable)."""

    def __init__(self, source, N_t: int = 720):
        self.source = source
        self.N_t = N_t

    def __call__(self, p) -> float:
        if hasattr(self.source, "simulate"):
            traj = self.source.simulate(p)
        else:
            traj = self.source.predict(p)
        return -average_cop(traj, self.N_t)


OBJECTIVES = {"neg_avg_cop": CopObjective}


def _objective(name, source):
    try:
        return OBJECTIVES[name](source)
    except KeyError:
        raise KeyError(f"unknown objective {name!r}; choose from {sorted(OBJECTIVES)}") from None


def optimize_model(model, objective_name: str = "neg_avg_cop", cfg: DeConfig = DeConfig(), space: ParameterSpace = None) -> OptResult:
    """DE against full-model solves."""
    res = differential_evolution(_objective(objective_name, model), space or model.param_space, cfg)
    res.full_value = res.best_value
    res.full_history = [(n, v) for n, _, v in res.history]
    return res


def optimize_surrogate(
    surr, model, objective_name: str = "neg_avg_cop", cfg: DeConfig = DeConfig(), reevaluate_history: bool = True,
) -> OptResult:
    """DE against surrogate predictions, with full-model re-evaluation.

    The returned winner is always re-scored on ``model`` (``full_value``).
    With ``reevaluate_history`` every improvement point of the surrogate run
    is re-scored too, giving a loss curve on the full model's objective.
    Re-evaluation time is reported separately from the DE wall time.
    """
    res = differential_evolution(_objective(objective_name, surr), surr.space, cfg)
    res.mode = "surrogate"
    full = _objective(objective_name, model)
    start = time.perf_counter()
    res.full_value = _safe(full, res.best_point)
    res.reevaluation_time_s = time.perf_counter() - start
    if reevaluate_history:
        res.full_history = [(n, _safe(full, p)) for (n, _, _), p in zip(res.history, res.history_points)]
    return res
