"""Fixed-step co-simulation master with zero-order-hold exchange.

Units are stepped independently between communication points. At each point
the master reads every unit's outputs, writes them to the wired inputs, and
then advances all units by ``h`` (Jacobi scheme). A trained surrogate can
stand in for a native unit as long as the input and output names agree.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DeadlockedWiring, ExtrapolationWarning
from .models import ParametrizedModel
from .sampling import ParameterSpace
from .timeseries import Trajectory

INFLATION = 0.05


class SimulationUnit:
    """Steppable unit with named inputs and outputs."""

    input_names: tuple = ()
    output_names: tuple = ()

    def reset(self, p, t0: float) -> None:
        raise NotImplementedError

    def set_inputs(self, values) -> None:
        raise NotImplementedError

    def step(self, to_time: float) -> None:
        raise NotImplementedError

    def get_outputs(self) -> np.ndarray:
        raise NotImplementedError


class NativeUnit(SimulationUnit):
    """A model with declared inputs, integrated with the stiff solver."""

    def __init__(self, model: ParametrizedModel):
        if not model.input_names:
            raise ValueError(f"model {model.name!r} declares no inputs")
        self.model = model
        self.input_names = tuple(model.input_names)
        self.output_names = tuple(model.output_labels)
        self.t = None

    def reset(self, p, t0: float = 0.0) -> None:
        self.p = np.asarray(p, dtype=float).reshape(-1)
        if self.p.size != len(self.model.param_names):
            raise ValueError(f"{self.model.name}: expected {len(self.model.param_names)} parameters, got {self.p.size}")
        self.inputs = self.model.param_space.center()[len(self.model.param_names):]
        self.t = float(t0)
        self.u = self.model.initial_state(self._full())

    def _full(self):
        return np.concatenate([self.p, self.inputs])

    def set_inputs(self, values) -> None:
        self.inputs = np.asarray(values, dtype=float).reshape(len(self.input_names))

    def step(self, to_time: float) -> None:
        if not to_time > self.t:
            raise ValueError(f"step must advance time: {to_time} <= {self.t}")
        span = (self.t, float(to_time))
        traj = self.model.solve_states(self._full(), saveat=np.array(span), tspan=span, initial_state=self.u)
        self.u = np.array(traj.values[-1])
        self.t = float(to_time)

    def get_outputs(self) -> np.ndarray:
        return self.model.outputs(self.u[None, :], self._full(), np.array([self.t]))[0]


class SurrogateUnit(SimulationUnit):
    """A surrogate trained on interval-local time ``[0, h]`` with inputs as parameters.

    Each step predicts over ``[0, h]`` at the currently held inputs and
    reports the end-of-interval outputs; nothing else carries over.
    """

    def __init__(self, surr, input_names, output_names=None):
        self.surr = surr
        self.input_names = tuple(input_names)
        if len(self.input_names) != surr.space.dim:
            raise ValueError(f"surrogate has {surr.space.dim} parameters, {len(self.input_names)} inputs given")
        self.output_names = tuple(output_names or surr.labels)
        self._idx = [surr.labels.index(n) for n in self.output_names]
        self.h = float(surr.save_times[-1] - surr.save_times[0])
        self.extrapolated = False

    def reset(self, p=None, t0: float = 0.0) -> None:
        # parameters other than the inputs were fixed at training time
        self.t = float(t0)
        self.inputs = self.surr.p_star.copy()
        self._out = self._predict()[0]

    def _predict(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ExtrapolationWarning)
            traj = self.surr.predict(self.inputs)
        if traj.extrapolated:
            self.extrapolated = True
            for w in caught:
                warnings.warn(w.message, w.category, stacklevel=3)
        return traj.values[:, self._idx]

    def set_inputs(self, values) -> None:
        self.inputs = np.asarray(values, dtype=float).reshape(len(self.input_names))

    def step(self, to_time: float) -> None:
        if abs((to_time - self.t) - self.h) > 1e-9 * max(1.0, self.h):
            raise ValueError(f"surrogate trained for steps of {self.h}, asked for {to_time - self.t}")
        self._out = self._predict()[-1]
        self.t = float(to_time)

    def get_outputs(self) -> np.ndarray:
        return np.array(self._out)


def native_unit(model: ParametrizedModel) -> NativeUnit:
    return NativeUnit(model)


def surrogate_unit(surr, input_map, output_names=None) -> SurrogateUnit:
    """Wrap ``surr`` as a unit; ``input_map`` lists unit input names in parameter order."""
    return SurrogateUnit(surr, input_map, output_names)


@dataclass(frozen=True)
class Coupling:
    """Wires ``((src_unit, src_output), (dst_unit, dst_input))`` and the time grid."""

    wires: tuple
    h: float
    t0: float
    tf: float

    def __post_init__(self):
        object.__setattr__(self, "wires", tuple((tuple(a), tuple(b)) for a, b in self.wires))
        if not self.h > 0:
            raise ConfigError("communication step h must be positive")
        n = (self.tf - self.t0) / self.h
        if n < 1 or abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigError(f"(tf - t0) / h = {n} is not a positive integer")
        targets = [dst for _, dst in self.wires]
        dup = {t for t in targets if targets.count(t) > 1}
        if dup:
            raise ConfigError(f"inputs wired more than once: {sorted(dup)}")

    @property
    def n_steps(self) -> int:
        return int(round((self.tf - self.t0) / self.h))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n_steps + 1)

    def validate(self, units: dict) -> None:
        for (su, so), (du, di) in self.wires:
            for name in (su, du):
                if name not in units:
                    raise ConfigError(f"wire references unknown unit {name!r}")
            if so not in units[su].output_names:
                raise ConfigError(f"unit {su!r} has no output {so!r}")
            if di not in units[du].input_names:
                raise ConfigError(f"unit {du!r} has no input {di!r}")
        wired = {dst for _, dst in self.wires}
        for name, unit in units.items():
            for inp in unit.input_names:
                if (name, inp) not in wired:
                    raise DeadlockedWiring(f"input {name}.{inp} is never wired")


@dataclass
class CosimRun:
    trajectory: Trajectory
    inputs: dict = field(default_factory=dict)  # unit -> (n_points, n_inputs)
    input_names: dict = field(default_factory=dict)
    extrapolated: bool = False


def _exchange(units, coupling, outputs):
    pending = {name: np.array(u.inputs if hasattr(u, "inputs") else np.zeros(len(u.input_names)), dtype=float)
               for name, u in units.items() if u.input_names}
    for (su, so), (du, di) in coupling.wires:
        pending[du][units[du].input_names.index(di)] = outputs[su][units[su].output_names.index(so)]
    for name, vals in pending.items():
        units[name].set_inputs(vals)
    return pending


def run_cosim(units: dict, coupling: Coupling, p_per_unit: dict) -> CosimRun:
    """Jacobi master loop; records coupled variables and the inputs seen.

    Returns a :class:`CosimRun` whose trajectory has one column per wired
    source output, labelled ``unit.output``, at every communication point.
    """
    coupling.validate(units)
    for name, unit in units.items():
        unit.reset(p_per_unit.get(name), coupling.t0)
    sources = list(dict.fromkeys(src for src, _ in coupling.wires))
    labels = tuple(f"{u}.{o}" for u, o in sources)
    # consistent start: one exchange before the first step
    _exchange(units, coupling, {n: u.get_outputs() for n, u in units.items()})
    times = coupling.times
    rows = []
    logged = {name: [] for name, u in units.items() if u.input_names}
    for k, t in enumerate(times):
        outputs = {n: u.get_outputs() for n, u in units.items()}
        rows.append([outputs[u][units[u].output_names.index(o)] for u, o in sources])
        held = _exchange(units, coupling, outputs)
        for name, vals in held.items():
            logged[name].append(vals.copy())
        if k < len(times) - 1:
            for unit in units.values():
                unit.step(times[k + 1])
    traj = Trajectory(times, np.array(rows), labels)
    return CosimRun(
        traj,
        {n: np.array(v) for n, v in logged.items()},
        {n: units[n].input_names for n in logged},
        any(getattr(u, "extrapolated", False) for u in units.values()),
    )


def master_cosim(units: dict, coupling: Coupling, p_per_unit: dict) -> Trajectory:
    """Coupled variables at every communication point (see :func:`run_cosim`)."""
    return run_cosim(units, coupling, p_per_unit).trajectory


def record_cosim_inputs(run: CosimRun) -> dict:
    """Per-unit input samples and their bounding box inflated by 5% of its width.

    A degenerate (zero-width) dimension is padded by 5% of ``max(|value|, 1)``.
    Returns ``{unit: (ParameterSpace, samples)}``.
    """
    out = {}
    for name, samples in run.inputs.items():
        lo, hi = samples.min(axis=0), samples.max(axis=0)
        width = hi - lo
        pad = np.where(width > 0, INFLATION * width, INFLATION * np.maximum(np.abs(lo), 1.0))
        space = ParameterSpace(run.input_names[name], lo - pad, hi + pad)
        out[name] = (space, samples)
    return out


def compare_traces(pred: Trajectory, ref: Trajectory, labels=None) -> dict:
    """Per-variable max relative error (fraction) on the shared sample times."""
    labels = list(labels or ref.labels)
    if not np.array_equal(pred.times, ref.times):
        raise ValueError("traces must share their sample times")
    out = {}
    for lab in labels:
        r = ref.column(lab)
        scale = np.max(np.abs(r)) or 1.0
        out[lab] = float(np.max(np.abs(pred.column(lab) - r)) / scale)
    return out
