"""Built-in parametrized benchmark models.

Models are plain classes (no closures) so they pickle cleanly into worker
processes. A co-simulation unit model treats its inputs as trailing entries of
the parameter vector: holding an input constant over a communication interval
is the same as solving with that parameter value.
"""

from __future__ import annotations

import numpy as np

from .integrators import OdeProblem, SolveOptions, solve_stiff
from .sampling import ParameterSpace
from .timeseries import Trajectory


class ParametrizedModel:
    """Explicit ODE ``u' = rhs(u, p, t)`` with labelled outputs.

    Subclasses set the class attributes and implement ``rhs``,
    ``initial_state`` and (optionally) ``jac`` and ``outputs``.
    """

    name = "model"
    state_labels: tuple = ()
    output_labels: tuple = ()
    param_names: tuple = ()
    input_names: tuple = ()
    default_p: np.ndarray = None
    tspan: tuple = (0.0, 1.0)
    error_grid = "linear"
    solve_options = SolveOptions(abstol=1e-8, reltol=1e-6)
    n_save = 200

    @property
    def state_dim(self) -> int:
        return len(self.state_labels)

    @property
    def n_outputs(self) -> int:
        return len(self.output_labels)

    @property
    def param_space(self) -> ParameterSpace:
        raise NotImplementedError

    def save_grid(self, tspan=None) -> np.ndarray:
        t0, tf = tspan or self.tspan
        return np.linspace(t0, tf, self.n_save)

    def initial_state(self, p) -> np.ndarray:
        raise NotImplementedError

    def rhs(self, u, p, t):
        raise NotImplementedError

    jac = None

    def outputs(self, u, p, t) -> np.ndarray:
        """Outputs for states ``u`` (n_t x n_state) at times ``t`` (n_t,)."""
        return np.asarray(u)

    def problem(self, p, tspan=None) -> OdeProblem:
        p = np.asarray(p, dtype=float)
        return OdeProblem(
            self.rhs, self.initial_state(p), tuple(tspan or self.tspan), p=p,
            jac=self.jac, labels=self.state_labels,
        )

    def solve_states(self, p, saveat=None, tspan=None, opts=None, initial_state=None) -> Trajectory:
        opts = opts or self.solve_options
        saveat = self.save_grid(tspan) if saveat is None else saveat
        prob = self.problem(p, tspan)
        if initial_state is not None:
            prob = OdeProblem(prob.rhs, initial_state, prob.tspan, prob.p, prob.jac, prob.labels)
        mode = "user-supplied" if self.jac is not None else "finite-difference"
        return solve_stiff(prob, opts.replace(saveat=saveat, jacobian_mode=mode))

    def simulate(self, p, saveat=None, tspan=None, opts=None) -> Trajectory:
        """Full-model solve; returns the labelled outputs at the save grid."""
        p = np.asarray(p, dtype=float)
        states = self.solve_states(p, saveat, tspan, opts)
        values = self.outputs(states.values, p, states.times)
        return Trajectory(states.times, values, self.output_labels)


class Robertson(ParametrizedModel):
    """Robertson's three-species kinetics with rates (k1, k2, k3)."""

    name = "robertson"
    state_labels = ("y1", "y2", "y3")
    output_labels = ("y1", "y2", "y3")
    param_names = ("k1", "k2", "k3")
    default_p = np.array([0.04, 3e7, 1e4])
    tspan = (0.0, 1e5)
    error_grid = "log"

    @property
    def param_space(self) -> ParameterSpace:
        return ParameterSpace(self.param_names, [0.036, 2.7e7, 0.9e4], [0.044, 3.3e7, 1.1e4])

    def save_grid(self, tspan=None) -> np.ndarray:
        t0, tf = tspan or self.tspan
        if t0 != 0.0 or tf <= 1e-5:
            return np.linspace(t0, tf, self.n_save)
        return np.concatenate([[0.0], np.geomspace(1e-5, tf, self.n_save - 1)])

    def initial_state(self, p):
        return np.array([1.0, 0.0, 0.0])

    def rhs(self, u, p, t):
        y1, y2, y3 = u
        k1, k2, k3 = p
        return np.array([
            -k1 * y1 + k3 * y2 * y3,
            k1 * y1 - k3 * y2 * y3 - k2 * y2 * y2,
            k2 * y2 * y2,
        ])

    def jac(self, u, p, t):
        y1, y2, y3 = u
        k1, k2, k3 = p
        return np.array([
            [-k1, k3 * y3, k3 * y2],
            [k1, -k3 * y3 - 2 * k2 * y2, -k3 * y2],
            [0.0, 2 * k2 * y2, 0.0],
        ])


# Toy room + vapor-compression analog. SI units; time in seconds.
C_ROOM = 1e6  # J/K
UA = 50.0  # W/K
TAU = 2.0  # s
KAPPA = 20.0  # W/rpm
C0 = 6.0  # W/rpm
ALPHA = 0.02  # 1/K
DAY = 86400.0


def t_amb(t):
    return 300.0 + 5.0 * np.sin(2 * np.pi * np.asarray(t) / DAY)


def q_int(g):
    return 200.0 + 1000.0 * g


def compressor_power(omega, t_room, t):
    return C0 * omega * (1.0 + ALPHA * (t_amb(t) - t_room))


def cop(q_tot, csp):
    return q_tot / np.maximum(0.01, csp)


class ToyHvac(ParametrizedModel):
    """Monolithic room + cooling unit over one day.

    Parameters: compressor speed omega (rpm), indoor fan speed (rpm) and the
    convective heat-gain fraction g.
    """

    name = "toy_hvac"
    state_labels = ("T_r", "Q_c")
    output_labels = ("T_r", "Q_c", "CSP", "COP")
    param_names = ("omega", "fan", "g")
    default_p = np.array([50.0, 300.0, 0.05])
    tspan = (0.0, DAY)

    @property
    def param_space(self) -> ParameterSpace:
        return ParameterSpace(self.param_names, [45.0, 270.0, 0.0], [55.0, 330.0, 0.1])

    def initial_state(self, p):
        return np.array([300.0, 0.0])

    def rhs(self, u, p, t):
        t_r, q_c = u
        omega, fan, g = p
        return np.array([
            (q_int(g) + UA * (t_amb(t) - t_r) - q_c) / C_ROOM,
            (KAPPA * omega * (fan / 300.0) - q_c) / TAU,
        ])

    def jac(self, u, p, t):
        return np.array([[-UA / C_ROOM, -1.0 / C_ROOM], [0.0, -1.0 / TAU]])

    def outputs(self, u, p, t):
        u = np.asarray(u)
        t_r, q_c = u[:, 0], u[:, 1]
        csp = compressor_power(p[0], t_r, t)
        return np.column_stack([t_r, q_c, csp, cop(q_c, csp)])


class RoomUnit(ParametrizedModel):
    """Room half of the split toy HVAC model; input Q_c is the last parameter."""

    name = "toy_hvac_room"
    state_labels = ("T_r",)
    output_labels = ("T_r",)
    param_names = ("g",)
    input_names = ("Q_c",)
    default_p = np.array([0.05])
    tspan = (0.0, DAY)

    @property
    def param_space(self) -> ParameterSpace:
        return ParameterSpace(self.param_names + self.input_names, [0.0, 0.0], [0.1, 1500.0])

    def initial_state(self, p):
        return np.array([300.0])

    def rhs(self, u, p, t):
        g, q_c = p
        return np.array([(q_int(g) + UA * (t_amb(t) - u[0]) - q_c) / C_ROOM])

    def jac(self, u, p, t):
        return np.array([[-UA / C_ROOM]])


class HvacUnit(ParametrizedModel):
    """Cooling-unit half of the split model; input T_r is the last parameter."""

    name = "toy_hvac_unit"
    state_labels = ("Q_c",)
    output_labels = ("Q_c", "CSP")
    param_names = ("omega", "fan")
    input_names = ("T_r",)
    default_p = np.array([50.0, 300.0])
    tspan = (0.0, DAY)

    @property
    def param_space(self) -> ParameterSpace:
        return ParameterSpace(self.param_names + self.input_names, [45.0, 270.0, 270.0], [55.0, 330.0, 310.0])

    def initial_state(self, p):
        return np.array([0.0])

    def rhs(self, u, p, t):
        omega, fan, _ = p
        return np.array([(KAPPA * omega * (fan / 300.0) - u[0]) / TAU])

    def jac(self, u, p, t):
        return np.array([[-1.0 / TAU]])

    def outputs(self, u, p, t):
        u = np.asarray(u)
        q_c = u[:, 0]
        return np.column_stack([q_c, compressor_power(p[0], p[2], t)])


class FixedParams(ParametrizedModel):
    """View of ``base`` with some parameters pinned and a new time span.

    Used to train interval-local co-simulation surrogates: the free parameters
    are the unit's inputs, and ``tspan`` is one communication interval.
    """

    def __init__(self, base: ParametrizedModel, fixed: dict, space: ParameterSpace = None, tspan=None, n_save=None):
        self.base = base
        self.fixed = {k: float(v) for k, v in fixed.items()}
        all_names = tuple(base.param_names) + tuple(base.input_names)
        unknown = set(self.fixed) - set(all_names)
        if unknown:
            raise KeyError(f"unknown parameters {sorted(unknown)} for model {base.name}")
        self.all_names = all_names
        self.free = tuple(n for n in all_names if n not in self.fixed)
        self.name = f"{base.name}[{','.join(self.free)}]"
        self.state_labels = base.state_labels
        self.output_labels = base.output_labels
        self.param_names = self.free
        self.input_names = ()
        self.tspan = tuple(tspan or base.tspan)
        self.error_grid = base.error_grid
        self.solve_options = base.solve_options
        self.n_save = n_save or base.n_save
        full_space = base.param_space
        if space is None:
            idx = [all_names.index(n) for n in self.free]
            space = ParameterSpace(self.free, full_space.lower[idx], full_space.upper[idx])
        self._space = space
        self.default_p = space.center()

    @property
    def param_space(self) -> ParameterSpace:
        return self._space

    def full(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        free = dict(zip(self.free, p))
        return np.array([self.fixed[n] if n in self.fixed else free[n] for n in self.all_names])

    def save_grid(self, tspan=None):
        t0, tf = tspan or self.tspan
        return np.linspace(t0, tf, self.n_save)

    def initial_state(self, p):
        return self.base.initial_state(self.full(p))

    def rhs(self, u, p, t):
        return self.base.rhs(u, self.full(p), t)

    @property
    def jac(self):
        return self._jac if self.base.jac is not None else None

    def _jac(self, u, p, t):
        return self.base.jac(u, self.full(p), t)

    def outputs(self, u, p, t):
        return self.base.outputs(u, self.full(p), t)


def robertson() -> Robertson:
    return Robertson()


def toy_hvac() -> ToyHvac:
    return ToyHvac()


def split_toy_hvac() -> tuple:
    """(room unit, hvac unit) whose instantaneous coupling reproduces ``toy_hvac``."""
    return RoomUnit(), HvacUnit()


MODELS = {
    "robertson": Robertson,
    "toy_hvac": ToyHvac,
    "toy_hvac_room": RoomUnit,
    "toy_hvac_unit": HvacUnit,
}


def get_model(name: str) -> ParametrizedModel:
    try:
        return MODELS[name]()
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
