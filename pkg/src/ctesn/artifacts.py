"""Surrogate artifacts, report files and minimal SVG plots.

A surrogate file is one JSON document. Keys are sorted, separators compact
and floats written shortest-round-trip, so the same surrogate always gives
the same bytes. The last field is a CRC-32 of everything before it. Reservoir
matrices are not stored; they are regenerated from the seed on demand.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ArtifactError
from .rbf import RbfInterpolant
from .reservoir import InputScaler, ReservoirSpec
from .sampling import ParameterSpace
from .surrogate import TrainedSurrogate

FORMAT = "ctesn-surrogate"
VERSION = 1
W_OUT_ORDER = "row-major: row i holds output i; shape (N, N_R + 1), last column multiplies the constant feature"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def surrogate_to_dict(surr: TrainedSurrogate) -> dict:
    d = {
        "format": FORMAT,
        "version": VERSION,
        "variant": surr.variant,
        "spec": surr.spec.to_dict(),
        "space": surr.space.to_dict(),
        "p_star": [float(v) for v in surr.p_star],
        "labels": list(surr.labels),
        "reservoir": {
            "knots": surr.save_times.tolist(),
            "values": surr.reservoir_states.tolist(),
        },
        "scaler": surr.scaler.to_dict(),
        "param_map": surr.param_map.to_dict(),
        "kernel": surr.kernel,
        "error_grid": surr.error_grid,
        "train_meta": surr.train_meta,
    }
    if surr.variant == "LP":
        d["w_out_order"] = W_OUT_ORDER
    else:
        d["np_readout"] = {
            "centers": surr.np_centers.tolist(),
            "lower": surr.np_lower.tolist(),
            "width": surr.np_width.tolist(),
        }
    return d


def surrogate_from_dict(d: dict) -> TrainedSurrogate:
    if d.get("format") != FORMAT:
        raise ArtifactError(f"not a surrogate file (format {d.get('format')!r})")
    if d.get("version") != VERSION:
        raise ArtifactError(f"unsupported surrogate version {d.get('version')!r}; this build reads version {VERSION}")
    try:
        np_part = d.get("np_readout") or {}
        arr = lambda key: np.asarray(np_part[key], dtype=float) if key in np_part else None  # noqa: E731
        return TrainedSurrogate(
            variant=d["variant"],
            spec=ReservoirSpec.from_dict(d["spec"]),
            space=ParameterSpace.from_dict(d["space"]),
            p_star=np.asarray(d["p_star"], dtype=float),
            labels=tuple(d["labels"]),
            save_times=np.asarray(d["reservoir"]["knots"], dtype=float),
            reservoir_states=np.asarray(d["reservoir"]["values"], dtype=float),
            scaler=InputScaler.from_dict(d["scaler"]),
            param_map=RbfInterpolant.from_dict(d["param_map"]),
            np_centers=arr("centers"),
            np_lower=arr("lower"),
            np_width=arr("width"),
            kernel=d["kernel"],
            error_grid=d["error_grid"],
            train_meta=d["train_meta"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"malformed surrogate file: {exc}") from exc


def dumps_surrogate(surr: TrainedSurrogate) -> str:
    body = canonical_json(surrogate_to_dict(surr))
    crc = zlib.crc32(body.encode("utf-8"))
    return body[:-1] + f',"checksum":"{crc:08x}"}}' + "\n"


def loads_surrogate(text: str) -> TrainedSurrogate:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"surrogate file is not valid JSON: {exc}") from exc
    if not isinstance(d, dict) or "checksum" not in d:
        raise ArtifactError("surrogate file has no checksum")
    stored = d.pop("checksum")
    crc = f"{zlib.crc32(canonical_json(d).encode('utf-8')):08x}"
    if stored != crc:
        raise ArtifactError(f"checksum mismatch: file says {stored}, content gives {crc}")
    return surrogate_from_dict(d)


def save_surrogate(surr: TrainedSurrogate, path) -> None:
    Path(path).write_text(dumps_surrogate(surr))


def load_surrogate(path) -> TrainedSurrogate:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc
    return loads_surrogate(text)


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def format_report(surr: TrainedSurrogate, report: dict = None) -> str:
    """Human-readable summary of a surrogate and, if given, its diagnostics."""
    meta = surr.train_meta
    lines = [
        f"CTESN surrogate ({surr.variant}), model {meta.get('model', '?')}, version {meta.get('version', '?')}",
        f"  reservoir: N_R={surr.spec.n_reservoir} density={surr.spec.density:g} "
        f"spectral_radius={surr.spec.spectral_radius:g} seed={surr.spec.seed} clock={surr.spec.clock}",
        f"  outputs: {', '.join(surr.labels)}",
        "  trained parameter ranges:",
    ]
    for name, lo, hi, sc in zip(surr.space.names, surr.space.lower, surr.space.upper, surr.space.scale):
        lines.append(f"    {name:>8s}: ({lo:.6g}, {hi:.6g}){' log' if sc == 'log' else ''}")
    lines.append(f"  p*: {', '.join(f'{v:.6g}' for v in surr.p_star)}")
    if meta:
        res = meta.get("train_residuals") or [0.0]
        lines.append(
            f"  training: n_train={meta.get('n_train')} lhs_seed={meta.get('lhs_seed')} "
            f"max residual={max(res):.3g}"
        )
    if report:
        lines.append(f"  validation on {report['n_test']} Sobol points ({report['normalization']}):")
        lines.append(f"    {'output':>8s} {'max %':>12s} {'avg %':>12s}")
        for lab in report["labels"]:
            lines.append(
                f"    {lab:>8s} {report['max_rel_err_pct'][lab]:12.5g} {report['avg_rel_err_pct'][lab]:12.5g}"
            )
        lines.append(f"    overall avg relative error: {report['avg_rel_err']:.5g} %")
        lines.append(
            f"    full solve {report['full_time_s'] * 1e3:.3g} ms, prediction {report['predict_time_s'] * 1e3:.3g} ms, "
            f"speedup {report['speedup']:.1f}x"
        )
        edges, counts = report["histogram_edges"], report["histogram_counts"]
        lines.append("    mean-of-max error histogram (%):")
        width = max(counts) or 1
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            lines.append(f"      [{lo:9.4g}, {hi:9.4g}) {c:4d} {'#' * int(round(30 * c / width))}")
    return "\n".join(lines) + "\n"


# --- SVG ---------------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _ticks(lo, hi, n=5):
    return np.linspace(lo, hi, n)


def svg_panels(path, panels, title: str = "", logx: bool = False, width: int = 640, panel_height: int = 200) -> None:
    """Stacked line plots.

    ``panels`` is a list of ``(ylabel, [(x, y, name, dashed), ...])``.
    """
    margin_l, margin_r, margin_t, gap = 70, 130, 30, 40
    height = margin_t + len(panels) * (panel_height + gap)
    pw = width - margin_l - margin_r
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
    ]
    for k, (ylabel, series) in enumerate(panels):
        top = margin_t + k * (panel_height + gap)
        xs = [np.asarray(s[0], float) for s in series]
        if logx:
            xs = [np.log10(np.where(x > 0, x, np.nan)) for x in xs]
        ys = [np.asarray(s[1], float) for s in series]
        xlo = min(np.nanmin(x) for x in xs)
        xhi = max(np.nanmax(x) for x in xs)
        ylo = min(np.nanmin(y) for y in ys)
        yhi = max(np.nanmax(y) for y in ys)
        if yhi == ylo:
            ylo, yhi = ylo - 0.5, yhi + 0.5
        if xhi == xlo:
            xhi = xlo + 1.0

        def px(x):
            return margin_l + (x - xlo) / (xhi - xlo) * pw

        def py(y):
            return top + panel_height - (y - ylo) / (yhi - ylo) * panel_height

        out.append(f'<rect x="{margin_l}" y="{top}" width="{pw}" height="{panel_height}" fill="none" stroke="#444"/>')
        for tx in _ticks(xlo, xhi):
            lab = f"1e{tx:.1f}" if logx else f"{tx:.4g}"
            out.append(f'<text x="{px(tx):.1f}" y="{top + panel_height + 14}" text-anchor="middle">{lab}</text>')
        for ty in _ticks(ylo, yhi):
            out.append(f'<text x="{margin_l - 4}" y="{py(ty) + 4:.1f}" text-anchor="end">{ty:.4g}</text>')
        out.append(
            f'<text x="14" y="{top + panel_height / 2}" transform="rotate(-90 14 {top + panel_height / 2})" '
            f'text-anchor="middle">{ylabel}</text>'
        )
        for j, ((_, _, name, dashed), x, y) in enumerate(zip(series, xs, ys)):
            ok = np.isfinite(x) & np.isfinite(y)
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], y[ok]))
            color = _COLORS[j % len(_COLORS)]
            dash = ' stroke-dasharray="6,4"' if dashed else ""
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
            out.append(f'<text x="{margin_l + pw + 8}" y="{top + 14 + 14 * j}" fill="{color}">{name}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
