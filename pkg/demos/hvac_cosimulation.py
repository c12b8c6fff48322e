"""Co-simulate the split toy HVAC with a surrogate standing in for the HVAC unit.

First the room and HVAC units run natively under a fixed-step Jacobi master.
The HVAC inputs seen in that run define the box the surrogate is trained on,
over a single coupling interval. The surrogate then replaces the native unit.

Run with ``python3 demos/hvac_cosimulation.py``.
"""

import numpy as np

from ctesn.cosim import Coupling, compare_traces, native_unit, record_cosim_inputs, run_cosim, surrogate_unit
from ctesn.models import FixedParams, HvacUnit, split_toy_hvac, toy_hvac
from ctesn.reservoir import ReservoirSpec
from ctesn.surrogate import TrainOptions, train

WIRES = ((("room", "T_r"), ("hvac", "T_r")), (("hvac", "Q_c"), ("room", "Q_c")))
P = {"room": np.array([0.05]), "hvac": np.array([50.0, 300.0])}


def native_units():
    room, hvac = split_toy_hvac()
    return {"room": native_unit(room), "hvac": native_unit(hvac)}


def main():
    coupling = Coupling(WIRES, 60.0, 0.0, 86400.0)
    native = run_cosim(native_units(), coupling, P)

    space, _ = record_cosim_inputs(native)["hvac"]
    print(f"HVAC input box: T_r in [{space.lower[0]:.2f}, {space.upper[0]:.2f}] K")
    local = FixedParams(HvacUnit(), {"omega": 50.0, "fan": 300.0}, space=space, tspan=(0.0, coupling.h))
    surr = train(local, space, ReservoirSpec(50), TrainOptions(n_train=20), "LP")

    units = native_units()
    units["hvac"] = surrogate_unit(surr, ("T_r",), HvacUnit.output_labels)
    hybrid = run_cosim(units, coupling, P)

    mono = toy_hvac().simulate([50.0, 300.0, 0.05], saveat=coupling.times)
    for lab, err in compare_traces(hybrid.trajectory, native.trajectory).items():
        print(f"surrogate vs native   {lab}: {100 * err:.2e}%")
    ref = mono.select(["T_r", "Q_c"])
    for (lab, col) in (("T_r", "room.T_r"), ("Q_c", "hvac.Q_c")):
        err = np.max(np.abs(native.trajectory.column(col) - ref.column(lab))) / np.max(np.abs(ref.column(lab)))
        print(f"native vs monolithic  {lab}: {100 * err:.3f}%")


if __name__ == "__main__":
    main()
