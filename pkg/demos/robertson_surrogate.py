"""Train NP and LP surrogates of the Robertson kinetics and compare them.

The NP surrogate uses a three-node reservoir and interpolates the readout
over a set of reservoir-trajectory centers. The LP surrogate uses a thousand
nodes and interpolates the full readout matrix over parameter space.

Run with ``python3 demos/robertson_surrogate.py``.
"""

import time

import numpy as np

from ctesn.models import robertson
from ctesn.reservoir import ReservoirSpec
from ctesn.surrogate import TrainOptions, train, validate_surrogate


def run(model, variant, n_reservoir):
    start = time.perf_counter()
    surr = train(model, model.param_space, ReservoirSpec(n_reservoir), TrainOptions(n_train=100), variant)
    elapsed = time.perf_counter() - start
    report = validate_surrogate(surr, model, n_test=100)
    print(f"{variant} N_R={n_reservoir:<5d} train {elapsed:6.1f}s  "
          f"avg err {report.avg_rel_err:.4f}%  speedup {report.speedup:.0f}x")
    for lab in report.labels:
        print(f"    {lab}: avg {report.avg_rel_err_pct[lab]:.4f}%  max {report.max_rel_err_pct[lab]:.4f}%")
    return surr


def main():
    model = robertson()
    np_surr = run(model, "NP", 3)
    run(model, "LP", 1000)

    # one prediction against the full solve, at a parameter off the training design
    p = np.array([0.041, 2.9e7, 1.05e4])
    truth = model.simulate(p)
    pred = np_surr.predict(p, truth.times)
    i = np.argmax(truth.column("y2"))
    print(f"y2 peak at t={truth.times[i]:.3g}: full {truth.column('y2')[i]:.4e}, NP {pred.column('y2')[i]:.4e}")


if __name__ == "__main__":
    main()
