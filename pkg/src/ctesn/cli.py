"""Command-line front end: simulate, train, optimize, cosim and report.

Usage::

    ctesn simulate --config run.json --out-dir out/
    ctesn train    --config run.json --out-dir out/ --jobs 4
    ctesn optimize --config run.json --out-dir out/
    ctesn cosim    --config run.json --out-dir out/
    ctesn report   out/surrogate.json

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 bad artifact.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .artifacts import format_report, load_surrogate, save_surrogate, svg_panels, write_json
from .cosim import Coupling, compare_traces, native_unit, record_cosim_inputs, run_cosim, surrogate_unit
from .errors import ArtifactError, ConfigError, NumericalFailure, TrainingDiverged
from .models import FixedParams, get_model
from .optimize import DeConfig, optimize_model, optimize_surrogate
from .reservoir import ReservoirSpec
from .sampling import ParameterSpace
from .surrogate import TrainOptions, train, validate_surrogate
from .timeseries import Trajectory, relative_error_trajectory, write_csv

log = logging.getLogger("ctesn")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ARTIFACT = 0, 2, 3, 4


# --- configuration -------------------------------------------------------------


@dataclass
class SurrogateConfig:
    variant: Optional[str] = None
    n_reservoir: Optional[int] = None
    density: Optional[float] = None
    spectral_radius: float = 1.0
    input_scale: float = 1.0
    seed: int = 0
    n_train: Optional[int] = None
    lhs_seed: int = 0
    n_centers: int = 32
    clock: str = "grid"
    clock_span: float = 8.0
    rcond: float = 1e-10
    ridge: float = 1e-10
    file: Optional[str] = None


@dataclass
class ValidationConfig:
    n_test: int = 100
    n_error_points: int = 1000
    n_bins: int = 10


@dataclass
class OptimizeConfig:
    population: int = 50
    max_evals: int = 1000
    F: float = 0.7
    CR: float = 0.9
    seed: int = 0
    target_tolerance: Optional[float] = None
    patience: int = 10
    mode: str = "both"
    objective: str = "neg_avg_cop"


@dataclass
class CosimConfig:
    h: float = 60.0
    t0: float = 0.0
    tf: float = 86400.0
    units: dict = field(default_factory=lambda: {"room": "toy_hvac_room", "hvac": "toy_hvac_unit"})
    wiring: list = field(default_factory=lambda: [["room.T_r", "hvac.T_r"], ["hvac.Q_c", "room.Q_c"]])
    params: dict = field(default_factory=lambda: {"room": [0.05], "hvac": [50.0, 300.0]})
    surrogate_unit: Optional[str] = "hvac"
    monolithic: Optional[str] = "toy_hvac"
    monolithic_p: Optional[list] = field(default_factory=lambda: [50.0, 300.0, 0.05])
    compare: dict = field(default_factory=lambda: {"room.T_r": "T_r", "hvac.Q_c": "Q_c"})


@dataclass
class RunConfig:
    model: Optional[str] = None
    p: Optional[object] = None
    tspan: Optional[list] = None
    space: Optional[dict] = None
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    optimize: OptimizeConfig = field(default_factory=OptimizeConfig)
    cosim: CosimConfig = field(default_factory=CosimConfig)
    out_dir: Optional[str] = None


SECTIONS = {"surrogate": SurrogateConfig, "validation": ValidationConfig, "optimize": OptimizeConfig, "cosim": CosimConfig}

# surrogate settings used when the config leaves them open
MODEL_DEFAULTS = {
    "robertson": {"variant": "NP", "n_reservoir": 3, "n_train": 100},
    "toy_hvac": {"variant": "LP", "n_reservoir": 50, "n_train": 50},
}
UNIT_DEFAULTS = {"variant": "LP", "n_reservoir": 50, "n_train": 20}
FALLBACK_DEFAULTS = {"variant": "NP", "n_reservoir": 3, "n_train": 100}


def _no_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigError(f"duplicate key {k!r}")
        seen[k] = v
    return seen


def _strict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(repr(k) for k in unknown)} in {where}")
    return data


def parse_config(data: dict) -> RunConfig:
    """Strictly build a :class:`RunConfig`; unknown keys raise :class:`ConfigError`."""
    _strict(RunConfig, data, "config")
    kw = {}
    for key, value in data.items():
        if key in SECTIONS:
            kw[key] = SECTIONS[key](**_strict(SECTIONS[key], value, f"section {key!r}"))
        else:
            kw[key] = value
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data)


def _model(name):
    if not name:
        raise ConfigError("field 'model' is required")
    try:
        return get_model(name)
    except KeyError as exc:
        raise ConfigError(f"field 'model': {exc.args[0]}") from None


def _param_vector(model, p, names=None, where="p"):
    names = tuple(names or model.param_names)
    if p is None:
        return np.asarray(model.default_p, dtype=float)
    if isinstance(p, dict):
        unknown = sorted(set(p) - set(names))
        if unknown:
            raise ConfigError(f"field {where!r}: unknown parameter(s) {unknown}")
        base = dict(zip(names, np.asarray(model.default_p, dtype=float)))
        base.update({k: float(v) for k, v in p.items()})
        return np.array([base[n] for n in names])
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != len(names):
        raise ConfigError(f"field {where!r}: expected {len(names)} values {names}, got {p.size}")
    return p


def _space(model, override) -> ParameterSpace:
    if override is None:
        return model.param_space
    base = model.param_space.to_dict()
    _strict_keys = {"names", "lower", "upper", "scale"}
    unknown = sorted(set(override) - _strict_keys)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section 'space'")
    base.update(override)
    try:
        return ParameterSpace.from_dict(base)
    except ValueError as exc:
        raise ConfigError(f"section 'space': {exc}") from exc


def _surrogate_settings(cfg: SurrogateConfig, defaults: dict) -> SurrogateConfig:
    filled = {k: (getattr(cfg, k) if getattr(cfg, k) is not None else v) for k, v in defaults.items()}
    out = replace(cfg, **filled)
    if out.variant not in ("LP", "NP"):
        raise ConfigError(f"field 'surrogate.variant' must be 'LP' or 'NP', got {out.variant!r}")
    return out


def _reservoir_spec(cfg: SurrogateConfig) -> ReservoirSpec:
    try:
        return ReservoirSpec(
            cfg.n_reservoir, cfg.density, cfg.spectral_radius, cfg.input_scale,
            seed=cfg.seed, clock=cfg.clock, clock_span=cfg.clock_span,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section 'surrogate': {exc}") from exc


def _train_options(cfg: SurrogateConfig, space: ParameterSpace, jobs: int) -> TrainOptions:
    if cfg.n_train < space.dim + 2:
        raise ConfigError(f"field 'surrogate.n_train' must be >= d + 2 = {space.dim + 2}, got {cfg.n_train}")
    return TrainOptions(cfg.n_train, cfg.lhs_seed, cfg.rcond, ridge=cfg.ridge, n_centers=cfg.n_centers, jobs=jobs)


def _de_config(cfg: OptimizeConfig, jobs: int) -> DeConfig:
    try:
        return DeConfig(cfg.population, cfg.max_evals, cfg.F, cfg.CR, cfg.seed, cfg.target_tolerance, cfg.patience, jobs)
    except ValueError as exc:
        raise ConfigError(f"section 'optimize': {exc}") from exc


def _train_surrogate(model, space, scfg: SurrogateConfig, jobs: int):
    spec = _reservoir_spec(scfg)
    opts = _train_options(scfg, space, jobs)
    try:
        return train(model, space, spec, opts, scfg.variant)
    except TrainingDiverged as exc:
        log.error("training failed at parameter point %s", None if exc.point is None else list(exc.point))
        raise


# --- outputs -------------------------------------------------------------------


def _manifest(args, cfg: RunConfig, outputs) -> dict:
    return {
        "command": args.command,
        "argv": list(args.argv),
        "config": asdict(cfg),
        "jobs": args.jobs,
        "seed_override": args.seed,
        "versions": {
            "ctesn": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "outputs": sorted(outputs),
    }


def _write_convergence(res, path, with_full: bool):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eval_count", "wall_time_s", "best_value"] + (["full_value"] if with_full else []))
        full = dict(res.full_history)
        for n, wall, best in res.history:
            row = [n, repr(float(wall)), repr(float(best))]
            if with_full:
                row.append(repr(float(full[n])) if n in full else "")
            w.writerow(row)


# --- commands ------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: Path, args) -> list:
    model = _model(cfg.model)
    p = _param_vector(model, cfg.p)
    tspan = tuple(cfg.tspan) if cfg.tspan else None
    traj = model.simulate(p, tspan=tspan)
    write_csv(traj, out / "trajectory.csv")
    log.info("simulated %s at p=%s", model.name, p.tolist())
    return ["trajectory.csv"]


def cmd_train(cfg: RunConfig, out: Path, args) -> list:
    model = _model(cfg.model)
    space = _space(model, cfg.space)
    scfg = _surrogate_settings(cfg.surrogate, MODEL_DEFAULTS.get(model.name, FALLBACK_DEFAULTS))
    cfg.surrogate = scfg
    start = time.perf_counter()
    surr = _train_surrogate(model, space, scfg, args.jobs)
    train_time = time.perf_counter() - start
    save_surrogate(surr, out / "surrogate.json")
    log.info("trained %s surrogate (N_R=%d) in %.1fs", surr.variant, surr.n_reservoir, train_time)

    v = cfg.validation
    report, truths, preds = validate_surrogate(
        surr, model, v.n_test, v.n_error_points, jobs=args.jobs, n_bins=v.n_bins, keep_traces=True
    )
    rdict = report.to_dict()
    rdict["train_time_s"] = train_time
    write_json(rdict, out / "report.json")

    worst = report.worst_point
    err = relative_error_trajectory(preds[worst], truths[worst], v.n_error_points, surr.error_grid)
    write_csv(Trajectory(err.times, 100 * err.values, tuple(f"{lab}_err_pct" for lab in err.labels)), out / "worst_error.csv")
    panels = [
        (lab, [(truths[worst].times, truths[worst].column(lab), "truth", False),
               (preds[worst].times, preds[worst].column(lab), "prediction", True)])
        for lab in surr.labels
    ]
    svg_panels(out / "prediction.svg", panels, f"worst test point {worst}", logx=surr.error_grid == "log")
    if not args.quiet:
        print(format_report(surr, rdict), end="")
    return ["surrogate.json", "report.json", "worst_error.csv", "prediction.svg"]


def cmd_optimize(cfg: RunConfig, out: Path, args) -> list:
    model = _model(cfg.model)
    ocfg = cfg.optimize
    if ocfg.mode not in ("both", "model", "surrogate"):
        raise ConfigError(f"field 'optimize.mode' must be 'both', 'model' or 'surrogate', got {ocfg.mode!r}")
    de = _de_config(ocfg, args.jobs)
    written, summary = [], {}
    results = {}
    if ocfg.mode in ("both", "surrogate"):
        if cfg.surrogate.file:
            surr = load_surrogate(cfg.surrogate.file)
            if surr.train_meta.get("model") != model.name:
                raise ConfigError(f"surrogate file was trained on {surr.train_meta.get('model')!r}, not {model.name!r}")
        else:
            scfg = _surrogate_settings(cfg.surrogate, MODEL_DEFAULTS.get(model.name, FALLBACK_DEFAULTS))
            cfg.surrogate = scfg
            start = time.perf_counter()
            surr = _train_surrogate(model, _space(model, cfg.space), scfg, args.jobs)
            summary["surrogate_train_time_s"] = time.perf_counter() - start
            save_surrogate(surr, out / "surrogate.json")
            written.append("surrogate.json")
        results["surrogate"] = optimize_surrogate(surr, model, ocfg.objective, de)
    if ocfg.mode in ("both", "model"):
        results["model"] = optimize_model(model, ocfg.objective, de, _space(model, cfg.space))
    for mode, res in results.items():
        write_json(res.to_dict(), out / f"opt_{mode}.json")
        _write_convergence(res, out / f"convergence_{mode}.csv", mode == "surrogate")
        written += [f"opt_{mode}.json", f"convergence_{mode}.csv"]
        summary[f"{mode}_wall_time_s"] = res.wall_time_s
        summary[f"{mode}_best_full_value"] = res.full_value
        summary[f"{mode}_best_point"] = [float(v) for v in res.best_point]
    if len(results) == 2:
        s, m = results["surrogate"], results["model"]
        summary["relative_gap"] = abs(s.full_value - m.full_value) / abs(m.full_value)
        summary["wall_time_ratio"] = (s.wall_time_s + s.reevaluation_time_s) / m.wall_time_s
        panels = [("best objective", [
            (np.array([h[0] for h in m.history]), np.array([h[2] for h in m.history]), "full model", False),
            (np.array([h[0] for h in s.full_history]), np.array([h[1] for h in s.full_history]), "surrogate (full objective)", True),
        ])]
        svg_panels(out / "convergence.svg", panels, "objective vs evaluations")
        written.append("convergence.svg")
    write_json(summary, out / "summary.json")
    written.append("summary.json")
    if not args.quiet:
        for k, v in summary.items():
            print(f"{k}: {v}")
    return written


def _parse_wire(text, where):
    try:
        unit, name = text.split(".", 1)
    except (AttributeError, ValueError):
        raise ConfigError(f"{where}: expected 'unit.variable', got {text!r}") from None
    return unit, name


def cmd_cosim(cfg: RunConfig, out: Path, args) -> list:
    c = cfg.cosim
    models = {}
    for name, model_name in c.units.items():
        try:
            models[name] = get_model(model_name)
        except KeyError as exc:
            raise ConfigError(f"field 'cosim.units.{name}': {exc.args[0]}") from None
    unknown = sorted(set(c.params) - set(models))
    if unknown:
        raise ConfigError(f"field 'cosim.params' names unknown unit(s) {unknown}")
    params = {n: _param_vector(m, c.params.get(n), where=f"cosim.params.{n}") for n, m in models.items()}
    wires = []
    for k, pair in enumerate(c.wiring):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"field 'cosim.wiring[{k}]' must be [source, target]")
        wires.append((_parse_wire(pair[0], f"cosim.wiring[{k}]"), _parse_wire(pair[1], f"cosim.wiring[{k}]")))
    coupling = Coupling(wires, c.h, c.t0, c.tf)

    native = run_cosim({n: native_unit(m) for n, m in models.items()}, coupling, params)
    write_csv(native.trajectory, out / "cosim_native.csv")
    written = ["cosim_native.csv"]
    errors = {"h": c.h, "interval_local_surrogate": True}

    if c.monolithic:
        mono_model = _model(c.monolithic)
        mono = mono_model.simulate(_param_vector(mono_model, c.monolithic_p, where="cosim.monolithic_p"), saveat=coupling.times)
        cols = list(c.compare)
        ref = Trajectory(coupling.times, mono.select([c.compare[k] for k in cols]).values, tuple(cols))
        e = compare_traces(native.trajectory.select(cols), ref)
        errors["native_vs_monolithic"] = e
        errors["native_vs_monolithic_max"] = max(e.values())

    if c.surrogate_unit:
        name = c.surrogate_unit
        if name not in models:
            raise ConfigError(f"field 'cosim.surrogate_unit' names unknown unit {name!r}")
        unit_model = models[name]
        space, samples = record_cosim_inputs(native)[name]
        fixed = dict(zip(unit_model.param_names, params[name]))
        local = FixedParams(unit_model, fixed, space=space, tspan=(0.0, c.h))
        scfg = _surrogate_settings(cfg.surrogate, UNIT_DEFAULTS)
        cfg.surrogate = scfg
        surr = _train_surrogate(local, space, scfg, args.jobs)
        save_surrogate(surr, out / "unit_surrogate.json")
        units = {n: native_unit(m) for n, m in models.items()}
        units[name] = surrogate_unit(surr, unit_model.input_names, unit_model.output_labels)
        run = run_cosim(units, coupling, params)
        write_csv(run.trajectory, out / "cosim_surrogate.csv")
        e = compare_traces(run.trajectory, native.trajectory)
        errors["surrogate_vs_native"] = e
        errors["surrogate_vs_native_max"] = max(e.values())
        errors["surrogate_extrapolated"] = run.extrapolated
        errors["surrogate_input_box"] = space.to_dict()
        errors["surrogate_input_samples"] = int(len(samples))
        written += ["unit_surrogate.json", "cosim_surrogate.csv"]
    write_json(errors, out / "cosim_errors.json")
    written.append("cosim_errors.json")
    if not args.quiet:
        print(json.dumps(errors, indent=2, sort_keys=True))
    return written


def cmd_report(args) -> int:
    surr = load_surrogate(args.surrogate)
    diag = args.diagnostics
    if diag is None:
        sibling = Path(args.surrogate).with_name("report.json")
        diag = sibling if sibling.exists() else None
    report = json.loads(Path(diag).read_text()) if diag else None
    print(format_report(surr, report), end="")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "optimize": cmd_optimize, "cosim": cmd_cosim}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="strict JSON run configuration")
    common.add_argument("--out-dir", help="output directory (overrides the config's out_dir)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for reference solves")
    common.add_argument("--seed", type=int, help="override every seed (reservoir, LHS, optimizer)")
    common.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")

    parser = argparse.ArgumentParser(prog="ctesn", description="CTESN surrogates for parametrized stiff ODEs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="solve a model and write its trajectory CSV")
    sub.add_parser("train", parents=[common], help="train and validate a surrogate")
    sub.add_parser("optimize", parents=[common], help="maximise average COP with the model and/or a surrogate")
    sub.add_parser("cosim", parents=[common], help="co-simulate split units, natively and with a surrogate unit")
    rep = sub.add_parser("report", help="print a surrogate file's diagnostic report")
    rep.add_argument("surrogate", help="surrogate JSON file")
    rep.add_argument("--diagnostics", help="report JSON (default: report.json next to the surrogate)")
    rep.add_argument("-q", "--quiet", action="store_true")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg.surrogate = replace(cfg.surrogate, seed=args.seed, lhs_seed=args.seed)
        cfg.optimize = replace(cfg.optimize, seed=args.seed)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return cfg


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        if args.command == "report":
            return cmd_report(args)
        cfg = _apply_overrides(load_config(args.config), args)
        out = Path(cfg.out_dir or ".")
        out.mkdir(parents=True, exist_ok=True)
        written = COMMANDS[args.command](cfg, out, args)
        write_json(_manifest(args, cfg, written + ["manifest.json"]), out / "manifest.json")
        return EXIT_OK
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except NumericalFailure as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
