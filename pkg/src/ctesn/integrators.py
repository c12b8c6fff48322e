"""Adaptive ODE integrators.

``solve_stiff`` is a four-stage, stiffly accurate Rosenbrock method of order 3
with an embedded order-2 estimate (the RODAS3 coefficients of Sandu et al.,
1997). It is L-stable and needs only one LU factorisation per step.
``solve_explicit`` is the Dormand-Prince 5(4) pair with its native quartic
dense output, meant for the non-stiff reservoir equation.

Both use the same PI step-size controller (safety 0.9, step ratio clamped to
[0.2, 5]) and produce output exactly at the requested ``saveat`` times.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import NonFiniteState, SingularJacobian, StepLimitExceeded
from .timeseries import Trajectory

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class OdeProblem:
    """``u' = rhs(u, p, t)`` on ``tspan`` from ``initial_state``.

    ``jac`` is optional; when given and ``SolveOptions.jacobian_mode`` is
    ``"user-supplied"`` it must return d(rhs)/du as a dense array.
    """

    rhs: Callable
    initial_state: np.ndarray
    tspan: tuple
    p: np.ndarray = None
    jac: Optional[Callable] = None
    labels: tuple = ()

    def __post_init__(self):
        u0 = np.atleast_1d(np.asarray(self.initial_state, dtype=float))
        object.__setattr__(self, "initial_state", u0)
        t0, tf = float(self.tspan[0]), float(self.tspan[1])
        if not tf > t0:
            raise ValueError(f"tspan must satisfy tf > t0, got {self.tspan}")
        object.__setattr__(self, "tspan", (t0, tf))
        if self.p is not None:
            object.__setattr__(self, "p", np.asarray(self.p, dtype=float))

    @property
    def dimension(self) -> int:
        return self.initial_state.size


@dataclass(frozen=True)
class SolveOptions:
    abstol: float = 1e-8
    reltol: float = 1e-6
    max_steps: int = 100_000
    saveat: Union[None, int, Sequence[float]] = None
    jacobian_mode: str = "finite-difference"
    initial_step: Optional[float] = None

    def __post_init__(self):
        if not (self.abstol > 0 and self.reltol > 0 and self.max_steps > 0):
            raise ValueError("abstol, reltol and max_steps must be positive")
        if self.jacobian_mode not in ("finite-difference", "user-supplied"):
            raise ValueError(f"unknown jacobian_mode {self.jacobian_mode!r}")

    def replace(self, **kw) -> "SolveOptions":
        fields = dict(self.__dict__)
        fields.update(kw)
        return SolveOptions(**fields)


RESERVOIR_OPTIONS = SolveOptions(abstol=1e-6, reltol=1e-4)
REFERENCE_OPTIONS = SolveOptions(abstol=1e-8, reltol=1e-6)


def _save_times(problem: OdeProblem, saveat) -> Optional[np.ndarray]:
    t0, tf = problem.tspan
    if saveat is None:
        return None
    if isinstance(saveat, (int, np.integer)):
        if saveat < 2:
            raise ValueError("saveat count must be >= 2")
        return np.linspace(t0, tf, int(saveat))
    times = np.asarray(saveat, dtype=float)
    tol = 1e-12 * max(abs(t0), abs(tf), 1.0)
    if times.ndim != 1 or times.size < 2:
        raise ValueError("saveat needs at least two times")
    if np.any(times < t0 - tol) or np.any(times > tf + tol):
        raise ValueError("every saveat time must lie within tspan")
    if np.any(np.diff(times) <= 0):
        raise ValueError("saveat times must be strictly increasing")
    return np.clip(times, t0, tf)


def _error_norm(err, y, y_new, atol, rtol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return np.sqrt(np.mean((err / scale) ** 2))


def _initial_step(f, t0, y0, f0, direction_span, order, atol, rtol):
    # Hairer, Norsett & Wanner, Solving ODEs I, II.4.
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = y0 + h0 * f0
    f1 = f(y1, t0 + h0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1, direction_span)


class _Controller:
    """PI controller on the weighted RMS error (accept when err <= 1)."""

    def __init__(self, order):
        self.k = order
        self.beta1 = 0.7 / order
        self.beta2 = 0.4 / order
        self.prev = 1e-4

    def accept_factor(self, err):
        err = max(err, 1e-10)
        factor = SAFETY * err ** (-self.beta1) * self.prev ** self.beta2
        self.prev = err
        return min(MAX_FACTOR, max(MIN_FACTOR, factor))

    def reject_factor(self, err):
        return max(MIN_FACTOR, SAFETY * err ** (-1.0 / self.k))


class _Recorder:
    """Collects output at save times from a dense interpolant, or every step."""

    def __init__(self, t0, y0, save):
        self.save = save
        if save is None:
            self.ts, self.ys = [t0], [y0.copy()]
        else:
            self.out = np.empty((save.size, y0.size))
            self.i = 0
            while self.i < save.size and save[self.i] <= t0:
                self.out[self.i] = y0
                self.i += 1

    def step(self, t_old, t_new, y_new, interp):
        if self.save is None:
            self.ts.append(t_new)
            self.ys.append(y_new.copy())
            return
        save, i = self.save, self.i
        j = i
        while j < save.size and save[j] <= t_new:
            j += 1
        if j > i:
            block = save[i:j]
            exact = block == t_new
            if np.any(~exact):
                self.out[i:j][~exact] = interp(block[~exact])
            self.out[i:j][exact] = y_new
            self.i = j

    def trajectory(self, labels):
        if self.save is None:
            return Trajectory(np.array(self.ts), np.array(self.ys), labels)
        return Trajectory(self.save, self.out, labels)


def _check_finite(y, t):
    if not np.all(np.isfinite(y)):
        raise NonFiniteState(f"non-finite state produced at t={t:.6g}")


# RODAS3: A (stage arguments), C (stage couplings), M (solution), E (error),
# alpha (stage times), gamma_i (time-derivative weights), diagonal gamma.
_R3_GAMMA = 0.5
_R3_A = ((), (0.0,), (2.0, 0.0), (2.0, 0.0, 1.0))
_R3_C = ((), (4.0,), (1.0, -1.0), (1.0, -1.0, -8.0 / 3.0))
_R3_M = (2.0, 0.0, 1.0, 1.0)
_R3_E = (0.0, 0.0, 0.0, 1.0)
_R3_ALPHA = (0.0, 0.0, 1.0, 1.0)
_R3_GAMMAS = (0.5, 1.5, 0.0, 0.0)
_R3_ORDER = 3


def _fd_jacobian(f, t, y, fy):
    n = y.size
    jac = np.empty((n, n))
    for j in range(n):
        delta = np.sqrt(_EPS) * max(abs(y[j]), 1e-6)
        yp = y.copy()
        yp[j] += delta
        delta = yp[j] - y[j]
        jac[:, j] = (f(yp, t) - fy) / delta
    return jac


def _fd_time_derivative(f, t, y, fy, h):
    delta = np.sqrt(_EPS) * max(abs(t), abs(h), 1e-300)
    delta = (t + delta) - t
    return (f(y, t + delta) - fy) / delta


def _hermite(t0, y0, f0, t1, y1, f1):
    h = t1 - t0

    def interp(ts):
        s = ((np.asarray(ts) - t0) / h)[:, None]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1

    return interp


def solve_stiff(problem: OdeProblem, opts: SolveOptions = REFERENCE_OPTIONS, autonomous: bool = False) -> Trajectory:
    """Integrate a (possibly stiff) problem with the adaptive Rosenbrock method.

    The Jacobian is finite-differenced unless ``opts.jacobian_mode`` is
    ``"user-supplied"``. ``autonomous=True`` skips the time-derivative term.
    Values between steps come from cubic Hermite interpolation.

    Raises:
        StepLimitExceeded: more than ``opts.max_steps`` attempted steps.
        SingularJacobian: the stage matrix stayed singular after 10 step halvings.
        NonFiniteState: NaN or Inf appeared in an accepted state.
    """
    p = problem.p
    rhs = problem.rhs

    def f(y, t):
        return np.asarray(rhs(y, p, t), dtype=float)

    use_jac = opts.jacobian_mode == "user-supplied"
    if use_jac and problem.jac is None:
        raise ValueError("jacobian_mode='user-supplied' but the problem has no jac")

    t0, tf = problem.tspan
    span = tf - t0
    save = _save_times(problem, opts.saveat)
    atol, rtol = opts.abstol, opts.reltol
    t, y = t0, problem.initial_state.copy()
    fy = f(y, t)
    _check_finite(fy, t)
    rec = _Recorder(t, y, save)
    ctrl = _Controller(_R3_ORDER)
    h = opts.initial_step or _initial_step(f, t0, y, fy, span, _R3_ORDER, atol, rtol)
    n = y.size
    eye = np.eye(n)
    steps = 0
    jac = None
    rejected_last = False

    while t < tf:
        if steps >= opts.max_steps:
            raise StepLimitExceeded(f"max_steps={opts.max_steps} reached at t={t:.6g}")
        steps += 1
        if t + h >= tf or t + 1.01 * h >= tf:
            h = tf - t
        if jac is None or not rejected_last:
            jac = problem.jac(y, p, t) if use_jac else _fd_jacobian(f, t, y, fy)
            dfdt = None if autonomous else _fd_time_derivative(f, t, y, fy, h)
        for attempt in range(11):
            lu = lu_factor(eye / (h * _R3_GAMMA) - jac, check_finite=False)
            if np.all(np.isfinite(lu[0])) and np.min(np.abs(np.diag(lu[0]))) > 1e3 * _EPS * np.max(np.abs(lu[0])):
                break
            h *= 0.5
        else:
            raise SingularJacobian(f"stage matrix singular at t={t:.6g}")

        ks = []
        for i in range(4):
            if i == 0:
                fi = fy
            else:
                yi = y.copy()
                for aij, kj in zip(_R3_A[i], ks):
                    if aij:
                        yi += aij * kj
                fi = f(yi, t + _R3_ALPHA[i] * h)
            rhs_i = fi.copy()
            for cij, kj in zip(_R3_C[i], ks):
                rhs_i += (cij / h) * kj
            if dfdt is not None and _R3_GAMMAS[i]:
                rhs_i += (h * _R3_GAMMAS[i]) * dfdt
            ks.append(lu_solve(lu, rhs_i, check_finite=False))
        y_new = y + sum(m * k for m, k in zip(_R3_M, ks) if m)
        err_vec = ks[3]
        if not np.all(np.isfinite(y_new)):
            err = np.inf
        else:
            err = _error_norm(err_vec, y, y_new, atol, rtol)

        if err <= 1.0:
            t_new = tf if h == tf - t else t + h
            f_new = f(y_new, t_new)
            _check_finite(f_new, t_new)
            rec.step(t, t_new, y_new, _hermite(t, y, fy, t_new, y_new, f_new))
            t, y, fy = t_new, y_new, f_new
            h *= ctrl.accept_factor(err) if not rejected_last else min(1.0, ctrl.accept_factor(err))
            rejected_last = False
        else:
            h *= ctrl.reject_factor(err) if np.isfinite(err) else MIN_FACTOR
            rejected_last = True
        if h < 16 * _EPS * max(abs(t), 1.0):
            if not np.isfinite(err):
                raise NonFiniteState(f"non-finite values in every trial step near t={t:.6g}")
            raise StepLimitExceeded(f"step size underflow at t={t:.6g}")
    return rec.trajectory(problem.labels)


# Dormand-Prince 5(4).
_DP_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# Quartic dense output (Shampine 1986), columns are coefficients of s, s^2, s^3, s^4.
_DP_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


def solve_explicit(problem: OdeProblem, opts: SolveOptions = RESERVOIR_OPTIONS) -> Trajectory:
    """Integrate a non-stiff problem with adaptive Dormand-Prince 5(4).

    Raises:
        StepLimitExceeded: more than ``opts.max_steps`` attempted steps.
        NonFiniteState: NaN or Inf appeared in an accepted state.
    """
    p = problem.p
    rhs = problem.rhs

    def f(y, t):
        return np.asarray(rhs(y, p, t), dtype=float)

    t0, tf = problem.tspan
    span = tf - t0
    save = _save_times(problem, opts.saveat)
    atol, rtol = opts.abstol, opts.reltol
    t, y = t0, problem.initial_state.copy()
    fy = f(y, t)
    _check_finite(fy, t)
    rec = _Recorder(t, y, save)
    ctrl = _Controller(5)
    h = opts.initial_step or _initial_step(f, t0, y, fy, span, 5, atol, rtol)
    K = np.empty((7, y.size))
    steps = 0
    rejected_last = False

    while t < tf:
        if steps >= opts.max_steps:
            raise StepLimitExceeded(f"max_steps={opts.max_steps} reached at t={t:.6g}")
        steps += 1
        if t + 1.01 * h >= tf:
            h = tf - t
        K[0] = fy
        for i in range(1, 7):
            yi = y + h * (np.asarray(_DP_A[i]) @ K[:i])
            K[i] = f(yi, t + _DP_C[i] * h)
        y_new = yi  # FSAL: the last stage argument is the 5th-order solution
        if not np.all(np.isfinite(y_new)) or not np.all(np.isfinite(K[6])):
            err = np.inf
        else:
            err = _error_norm(h * (_DP_E @ K), y, y_new, atol, rtol)
        if err <= 1.0:
            t_new = tf if h == tf - t else t + h
            h_step = h
            y_old = y
            Q = K.T @ _DP_P

            def interp(ts, t_old=t, y_old=y_old, h_step=h_step, Q=Q):
                s = (np.asarray(ts) - t_old) / h_step
                powers = np.cumprod(np.repeat(s[:, None], 4, axis=1), axis=1)
                return y_old + h_step * powers @ Q.T

            rec.step(t, t_new, y_new, interp)
            t, y, fy = t_new, y_new, K[6].copy()
            h *= ctrl.accept_factor(err) if not rejected_last else min(1.0, ctrl.accept_factor(err))
            rejected_last = False
        else:
            h *= ctrl.reject_factor(err) if np.isfinite(err) else MIN_FACTOR
            rejected_last = True
        if h < 16 * _EPS * max(abs(t), 1.0):
            if not np.isfinite(err):
                raise NonFiniteState(f"non-finite values in every trial step near t={t:.6g}")
            raise StepLimitExceeded(f"step size underflow at t={t:.6g}")
    return rec.trajectory(problem.labels)
