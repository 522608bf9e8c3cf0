"""Command-line interface.

Each compute subcommand writes its delimited output (CSV) and, unless
``--no-images`` is given, a byte-exact PPM pixel image and a matplotlib
report figure alongside it.  Flags take precedence over an optional
``key=value`` config file; built-in defaults fill the rest.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .classify import classify_point
from .dynamics import PhaseState, SystemParams, find_critical_points
from .errors import CalderaError
from .integrate import IntegrationSettings
from .io import (
    read_config,
    read_ofm_csv,
    write_ld_csv,
    write_ofm_csv,
    write_ridge_csv,
    write_sweep_csv,
)
from .ld import extract_ridges, ld_field
from .pods import PodsSpec, branching_fraction, compute_ofm_pods, find_critical_lambda, sweep_lambda
from .render import (
    Palette,
    render_ofm,
    save_figure,
    save_ld_figure,
    save_sweep_figure,
    write_png,
    write_ppm,
)
from .section import SectionSpec, allowed_window, compute_ofm
from .upo import continue_upo, hunt_corner_node, load_upo, refine_upo, save_upo

DEFAULTS = {
    "lambda": 1.0,
    "energy": 29.0,
    "tau": 20.0,
    "grid": "300x300",
    "pods-grid": "200x200",
    "section-y": 1.88409,
    "py-sign": "+",
    "branch": "-",
    "tau-ld": 10.0,
    "percentile": 95.0,
    "mode": "full",
    "threads": None,
    "upscale": 1,
}


def _parse_pair(text):
    a, b = (float(v) for v in text.split(","))
    return (a, b)


def _parse_grid(text):
    nx, npx = (int(v) for v in text.lower().split("x"))
    return nx, npx


def _parse_sign(text):
    t = str(text).strip()
    if t in ("+", "+1", "1"):
        return 1
    if t in ("-", "-1"):
        return -1
    raise ValueError(f"sign must be + or -, got {text!r}")


class _Resolver:
    """flag value > config value > default."""

    def __init__(self, args):
        self.args = args
        self.cfg = read_config(args.config) if getattr(args, "config", None) else {}


def _resolve(res, key, cast, default=None):
    attr = "lam" if key == "lambda" else key.replace("-", "_")
    val = getattr(res.args, attr, None)
    if val is None:
        val = res.cfg.get(key)
    if val is None:
        val = DEFAULTS.get(key, default) if default is None else default
    if val is None:
        return None
    return cast(val)


def _apply_threads(res) -> None:
    val = _resolve(res, "threads", int, default=0)
    if val:
        import numba

        numba.set_num_threads(max(1, min(val, numba.config.NUMBA_NUM_THREADS)))


def _params(res) -> SystemParams:
    return SystemParams(lam=_resolve(res, "lambda", float), energy=_resolve(res, "energy", float))


def _settings(res) -> IntegrationSettings:
    return IntegrationSettings(max_time=_resolve(res, "tau", float))


def _out_path(res, fallback) -> Path:
    out = getattr(res.args, "out", None) or res.cfg.get("out") or fallback
    return Path(out)


def _emit_grid_outputs(grid, out_csv: Path, res, mode="full", title=""):
    write_ofm_csv(out_csv, grid)
    extras = []
    if not getattr(res.args, "no_images", False):
        image = render_ofm(grid, Palette(), mode=mode)
        ppm = out_csv.with_suffix(".ppm")
        write_ppm(ppm, image)
        extras.append(ppm.name)
        fig = out_csv.with_suffix(".png")
        save_figure(fig, grid, image, title=title)
        extras.append(fig.name)
    return extras


def _load_or_find_upo(res, p, settings):
    cache = getattr(res.args, "upo_cache", None) or res.cfg.get("upo-cache")
    if cache and Path(cache).exists():
        orbit = load_upo(cache, base_params=p)
        if abs(orbit.params.lam - p.lam) > 1e-12:
            orbit = continue_upo(orbit, p.lam, settings=settings)
        return orbit
    node = hunt_corner_node(p.with_lambda(1.0), settings)
    orbit = refine_upo(node, p=p.with_lambda(1.0), settings=settings)
    if abs(p.lam - 1.0) > 1e-12:
        orbit = continue_upo(orbit, p.lam, settings=settings)
    if cache:
        save_upo(cache, orbit)
    return orbit


def cmd_classify_one(res) -> int:
    p = _params(res)
    settings = _settings(res)
    state = PhaseState(*(float(v) for v in res.args.state.split(",")))
    idx = classify_point(state, settings, p)
    print(f"origin={idx.origin} fate={idx.fate}")
    return 0


def cmd_critical_points(res) -> int:
    p = _params(res)
    points = find_critical_points(p)
    out = getattr(res.args, "out", None)
    lines = [
        f"{cp.position[0]!r},{cp.position[1]!r},{cp.value!r},{cp.index}" for cp in points
    ]
    if out:
        Path(out).write_text("x,y,value,index\n" + "\n".join(lines) + "\n")
    for cp in points:
        kind = "minimum" if cp.index == 0 else "saddle"
        print(f"{kind}: x={cp.position[0]:+.9f} y={cp.position[1]:+.9f} V={cp.value:.9f}")
    print(f"critical-points: {len(points)} found (lambda={p.lam})")
    return 0


def cmd_ofm_section(res) -> int:
    p = _params(res)
    settings = _settings(res)
    _apply_threads(res)
    y_value = _resolve(res, "section-y", float)
    py_sign = _parse_sign(_resolve(res, "py-sign", str))
    nx, npx = _parse_grid(_resolve(res, "grid", str))
    xr = getattr(res.args, "x_range", None) or res.cfg.get("x-range")
    pr = getattr(res.args, "px_range", None) or res.cfg.get("px-range")
    if xr is None or pr is None:
        win = allowed_window(y_value, p)
        if win is None:
            print("ofm-section: section does not intersect the energy shell", file=sys.stderr)
            return 1
        xr = xr or f"{win[0][0]},{win[0][1]}"
        pr = pr or f"{win[1][0]},{win[1][1]}"
    spec = SectionSpec(
        y_value=y_value, py_sign=py_sign,
        x_range=_parse_pair(xr), px_range=_parse_pair(pr), nx=nx, npx=npx,
    )
    grid = compute_ofm(spec, settings, p)
    out_csv = _out_path(res, "ofm_section.csv")
    extras = _emit_grid_outputs(
        grid, out_csv, res, mode=_resolve(res, "mode", str),
        title=f"OFM section y={y_value}, py{'>' if py_sign>0 else '<'}0, lam={p.lam}",
    )
    n_ok = int((grid.status == 0).sum())
    n_forb = int((grid.status == 1).sum())
    print(
        f"ofm-section: {nx}x{npx} y={y_value} lam={p.lam} -> {n_ok} classified, "
        f"{n_forb} forbidden, {grid.n_failed} failed -> {out_csv}"
        + (f" ({', '.join(extras)})" if extras else "")
    )
    return 0


def cmd_find_upo(res) -> int:
    p = _params(res)
    settings = _settings(res)
    _apply_threads(res)
    node = hunt_corner_node(p.with_lambda(1.0), settings)
    orbit = refine_upo(node, p=p.with_lambda(1.0), settings=settings)
    if abs(p.lam - 1.0) > 1e-12:
        orbit = continue_upo(orbit, p.lam, settings=settings)
    out = _out_path(res, f"upo_lambda_{p.lam:g}.txt")
    save_upo(out, orbit)
    print(
        f"find-upo: lam={p.lam} fixed point (x,px)=({orbit.section_point[0]:.9f},"
        f"{orbit.section_point[1]:.9f}) period={orbit.period:.9f} "
        f"multiplier={orbit.floquet_multiplier:.4f} residual={orbit.residual:.2e} -> {out}"
    )
    return 0


def cmd_ofm_pods(res) -> int:
    p = _params(res)
    settings = _settings(res)
    _apply_threads(res)
    branch_txt = _resolve(res, "branch", str)
    branch = "both" if branch_txt == "both" else _parse_sign(branch_txt)
    nx, npx = _parse_grid(_resolve(res, "grid", str, default=DEFAULTS["pods-grid"]))
    orbit = _load_or_find_upo(res, p, settings)
    spec = PodsSpec(orbit=orbit, py_branch=branch, nx=nx, npx=npx)
    grid = compute_ofm_pods(spec, settings)
    out_csv = _out_path(res, "ofm_pods.csv")
    extras = _emit_grid_outputs(
        grid, out_csv, res, mode=_resolve(res, "mode", str),
        title=f"OFM on PODS, branch {branch}, lam={p.lam}",
    )
    rec = branching_fraction(grid)
    n_ok = int((grid.status == 0).sum())
    print(
        f"ofm-pods: {nx}x{npx} branch={branch} lam={p.lam} -> {n_ok} classified, "
        f"f23={rec.f_23:.6f} -> {out_csv}" + (f" ({', '.join(extras)})" if extras else "")
    )
    return 0


def cmd_sweep_lambda(res) -> int:
    p = _params(res)
    settings = _settings(res)
    _apply_threads(res)
    lam_range = _parse_pair(res.args.lambda_range or res.cfg.get("lambda-range") or "0.778,0.70")
    step = float(res.args.lambda_step or res.cfg.get("lambda-step") or 0.002)
    hi, lo = max(lam_range), min(lam_range)
    n = int(round((hi - lo) / step))
    lams = [hi - i * step for i in range(n + 1)]
    nx, npx = _parse_grid(_resolve(res, "grid", str, default=DEFAULTS["pods-grid"]))
    branch_txt = _resolve(res, "branch", str, default="both")
    branch = "both" if branch_txt == "both" else _parse_sign(branch_txt)
    base = _load_or_find_upo(res, p.with_lambda(hi), settings)
    records = sweep_lambda(
        lams, base, settings=settings, nx=nx, npx=npx, py_branch=branch,
        progress=lambda r: print(f"  lambda={r.lam:.4f} f23={r.f_23:.6f}", file=sys.stderr),
    )
    out_csv = _out_path(res, "sweep_lambda.csv")
    write_sweep_csv(out_csv, records)
    extras = []
    if not getattr(res.args, "no_images", False):
        fig = out_csv.with_suffix(".png")
        save_sweep_figure(fig, records)
        extras.append(fig.name)
    nonzero = sum(1 for r in records if r.f_23 > 0)
    print(
        f"sweep-lambda: {len(records)} values in [{lo},{hi}] step {step} -> "
        f"{nonzero} with f23>0 -> {out_csv}" + (f" ({', '.join(extras)})" if extras else "")
    )
    return 0


def cmd_critical_lambda(res) -> int:
    p = _params(res)
    settings = _settings(res)
    _apply_threads(res)
    bracket = _parse_pair(res.args.bracket or res.cfg.get("bracket") or "0.75,0.80")
    tol = float(res.args.tol or res.cfg.get("tol") or 1e-3)
    threshold = float(res.args.threshold or res.cfg.get("threshold") or 1e-4)
    nx, npx = _parse_grid(_resolve(res, "grid", str, default=DEFAULTS["pods-grid"]))
    base = _load_or_find_upo(res, p.with_lambda(1.0), settings)
    value = find_critical_lambda(
        bracket, tol=tol, threshold=threshold, base_orbit=base,
        settings=settings, nx=nx, npx=npx,
    )
    print(f"critical-lambda: {value:.6f} (bracket {bracket}, tol {tol}, threshold {threshold})")
    return 0


def cmd_ld_field(res) -> int:
    p = _params(res)
    settings = _settings(res)
    _apply_threads(res)
    tau_ld = _resolve(res, "tau-ld", float)
    percentile = _resolve(res, "percentile", float)
    on_pods = bool(getattr(res.args, "pods", False))
    nx, npx = _parse_grid(
        _resolve(res, "grid", str, default=DEFAULTS["pods-grid"] if on_pods else None)
    )
    if on_pods:
        branch_txt = _resolve(res, "branch", str)
        branch = "both" if branch_txt == "both" else _parse_sign(branch_txt)
        orbit = _load_or_find_upo(res, p, settings)
        spec = PodsSpec(orbit=orbit, py_branch=branch, nx=nx, npx=npx)
    else:
        y_value = _resolve(res, "section-y", float)
        py_sign = _parse_sign(_resolve(res, "py-sign", str))
        xr = getattr(res.args, "x_range", None) or res.cfg.get("x-range")
        pr = getattr(res.args, "px_range", None) or res.cfg.get("px-range")
        if xr is None or pr is None:
            win = allowed_window(y_value, p)
            if win is None:
                print("ld-field: section does not intersect the energy shell", file=sys.stderr)
                return 1
            xr = xr or f"{win[0][0]},{win[0][1]}"
            pr = pr or f"{win[1][0]},{win[1][1]}"
        spec = SectionSpec(
            y_value=y_value, py_sign=py_sign,
            x_range=_parse_pair(xr), px_range=_parse_pair(pr), nx=nx, npx=npx,
        )
    field = ld_field(spec, tau_ld=tau_ld, settings=settings, p=p)
    ridges = extract_ridges(field, gradient_percentile=percentile)
    out_csv = _out_path(res, "ld_field.csv")
    write_ld_csv(out_csv, field)
    ridge_csv = out_csv.with_name(out_csv.stem + "_ridges.csv")
    write_ridge_csv(ridge_csv, ridges)
    extras = [ridge_csv.name]
    if not getattr(res.args, "no_images", False):
        fig = out_csv.with_suffix(".png")
        save_ld_figure(fig, field, ridges, title=f"LD field tau_ld={tau_ld} lam={p.lam}")
        extras.append(fig.name)
    n_ridge = int(ridges.sum())
    print(
        f"ld-field: {nx}x{npx} tau_ld={tau_ld} lam={p.lam} -> {n_ridge} ridge cells -> "
        f"{out_csv} ({', '.join(extras)})"
    )
    return 0


def cmd_render(res) -> int:
    grid = read_ofm_csv(res.args.input)
    mode = _resolve(res, "mode", str)
    upscale = int(_resolve(res, "upscale", int))
    image = render_ofm(grid, Palette(), mode=mode, upscale=upscale)
    out = _out_path(res, Path(res.args.input).with_suffix(".ppm"))
    write_ppm(out, image)
    extras = []
    png = out.with_suffix(".png")
    if write_png(png, image):
        extras.append(png.name)
    print(
        f"render: {res.args.input} -> {out} ({image.shape[1]}x{image.shape[0]} px"
        + (f", {', '.join(extras)}" if extras else "")
        + ")"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calderaofm",
        description="Origin-fate maps, dividing surfaces and branching ratios "
        "for the stretched caldera Hamiltonian.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, grid_default=DEFAULTS["grid"]):
        sp.add_argument("--lambda", dest="lam", default=None,
                        help=f"stretching factor (default {DEFAULTS['lambda']})")
        sp.add_argument("--energy", default=None, help=f"total energy (default {DEFAULTS['energy']})")
        sp.add_argument("--tau", default=None, help=f"integration cutoff (default {DEFAULTS['tau']})")
        sp.add_argument("--grid", default=None, help=f"NXxNP resolution (default {grid_default})")
        sp.add_argument("--threads", default=None, help="compute thread count (numeric output unchanged)")
        sp.add_argument("--config", default=None, help="key=value config file; flags take precedence")
        sp.add_argument("--out", default=None, help="output path (CSV commands derive siblings)")
        sp.add_argument("--no-images", action="store_true", help="suppress PPM/figure outputs")

    sp = sub.add_parser("classify-one", help="origin-fate index of a single state")
    common(sp)
    sp.add_argument("--state", required=True, help="x,y,px,py")

    sp = sub.add_parser("critical-points", help="equilibria of the potential")
    common(sp)

    sp = sub.add_parser("ofm-section", help="OFM on a constant-y section")
    common(sp)
    sp.add_argument("--section-y", default=None, help=f"section coordinate (default {DEFAULTS['section-y']})")
    sp.add_argument("--py-sign", default=None, help="+ or - (default +)")
    sp.add_argument("--x-range", default=None, help="a,b (default: full allowed window)")
    sp.add_argument("--px-range", default=None, help="a,b (default: full allowed window)")
    sp.add_argument("--mode", default=None, choices=["full", "cofm"], help="render mode")

    sp = sub.add_parser("find-upo", help="locate and refine the top-right saddle orbit")
    common(sp)

    sp = sub.add_parser("ofm-pods", help="OFM on the periodic orbit dividing surface")
    common(sp, grid_default=DEFAULTS["pods-grid"])
    sp.add_argument("--branch", default=None, help="+, - or both (default -)")
    sp.add_argument("--upo-cache", default=None, help="orbit cache file (created if missing)")
    sp.add_argument("--mode", default=None, choices=["full", "cofm"], help="render mode")

    sp = sub.add_parser("sweep-lambda", help="branching fraction along a stretching sweep")
    common(sp, grid_default=DEFAULTS["pods-grid"])
    sp.add_argument("--lambda-range", default=None, help="hi,lo (default 0.778,0.70)")
    sp.add_argument("--lambda-step", default=None, help="step (default 0.002)")
    sp.add_argument("--branch", default=None, help="+, - or both (default both)")
    sp.add_argument("--upo-cache", default=None, help="orbit cache file")

    sp = sub.add_parser("critical-lambda", help="bisect the dynamical-matching transition")
    common(sp, grid_default=DEFAULTS["pods-grid"])
    sp.add_argument("--bracket", default=None, help="lo,hi (default 0.75,0.80)")
    sp.add_argument("--tol", default=None, help="bracket width target (default 1e-3)")
    sp.add_argument("--threshold", default=None, help="fraction threshold (default 1e-4)")
    sp.add_argument("--upo-cache", default=None, help="orbit cache file")

    sp = sub.add_parser("ld-field", help="Lagrangian descriptor field and ridges")
    common(sp)
    sp.add_argument("--section-y", default=None)
    sp.add_argument("--py-sign", default=None)
    sp.add_argument("--x-range", default=None)
    sp.add_argument("--px-range", default=None)
    sp.add_argument("--pods", action="store_true", help="evaluate on the PODS instead of a section")
    sp.add_argument("--branch", default=None, help="+, - or both (PODS only)")
    sp.add_argument("--upo-cache", default=None)
    sp.add_argument("--tau-ld", default=None, help=f"descriptor horizon (default {DEFAULTS['tau-ld']})")
    sp.add_argument("--percentile", default=None, help=f"ridge percentile (default {DEFAULTS['percentile']})")

    sp = sub.add_parser("render", help="render an OFM CSV to PPM/PNG")
    sp.add_argument("input", help="OFM CSV file")
    sp.add_argument("--mode", default=None, choices=["full", "cofm"])
    sp.add_argument("--upscale", default=None, help="integer pixel upscale")
    sp.add_argument("--out", default=None)
    sp.add_argument("--config", default=None)

    return parser


_COMMANDS = {
    "classify-one": cmd_classify_one,
    "critical-points": cmd_critical_points,
    "ofm-section": cmd_ofm_section,
    "find-upo": cmd_find_upo,
    "ofm-pods": cmd_ofm_pods,
    "sweep-lambda": cmd_sweep_lambda,
    "critical-lambda": cmd_critical_lambda,
    "ld-field": cmd_ld_field,
    "render": cmd_render,
}


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    res = _Resolver(args)
    try:
        return _COMMANDS[args.command](res)
    except CalderaError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, LookupError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
