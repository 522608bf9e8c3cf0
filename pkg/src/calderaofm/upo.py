"""Unstable periodic orbits: detection from OFM corner nodes and Newton refinement.

A single transversal intersection of a UPO with a constant-y section shows up
in the OFM as a "corner node": a 2x2 plaquette whose four origin-fate pairs
realize {(a,a), (a,b), (b,a), (b,b)} with exactly one field changing between
rotational neighbours.  The plaquette center seeds a Newton iteration on the
2-D return map P(x, px) with py closed from the energy shell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as k
from .dynamics import SystemParams
from .errors import DegenerateOrbit, NewtonDiverged, NoReturn, ContinuationStalled
from .integrate import IntegrationSettings
from .section import OFMGrid, STATUS_OK, SectionSpec, solve_py


@dataclass(frozen=True)
class CornerNode:
    cell_coords: tuple[float, float]
    quadrant_pattern: tuple[tuple[int, int], tuple[int, int], tuple[int, int], tuple[int, int]]
    channels: tuple[int, int]
    section: SectionSpec
    cell_diagonal: float


@dataclass
class UPOrbit:
    """Refined periodic orbit anchored to a section crossing."""

    section_point: tuple[float, float]
    period: float
    times: np.ndarray
    states: np.ndarray  # (n, 4) dense samples over one period
    floquet_multiplier: float
    monodromy: np.ndarray
    residual: float
    params: SystemParams
    section: SectionSpec
    arc_x: np.ndarray  # strictly increasing x along the orbit arc
    arc_y: np.ndarray

    @property
    def x_extent(self) -> tuple[float, float]:
        return (float(self.arc_x[0]), float(self.arc_x[-1]))

    @property
    def monodromy_det(self) -> float:
        return float(np.linalg.det(self.monodromy))


def _resolved(grid: OFMGrid, layer, ix, ipx) -> bool:
    return (
        grid.status[layer, ix, ipx] == STATUS_OK
        and grid.origin[layer, ix, ipx] != 0
        and grid.fate[layer, ix, ipx] != 0
    )


def scan_corner_nodes(grid: OFMGrid, layer: int = 0) -> list[CornerNode]:
    """All 2x2 plaquettes realizing the corner-node pattern."""
    if not isinstance(grid.spec, SectionSpec):
        raise TypeError("corner-node scan expects a constant-y section grid")
    nodes = []
    dx = float(grid.xs[1] - grid.xs[0])
    dp = float(grid.pxs[1] - grid.pxs[0])
    diag = math.hypot(dx, dp)
    origin = grid.origin[layer]
    fate = grid.fate[layer]
    for ix in range(grid.nx - 1):
        for jp in range(grid.npx - 1):
            corners = ((ix, jp), (ix + 1, jp), (ix + 1, jp + 1), (ix, jp + 1))
            if not all(_resolved(grid, layer, a, b) for a, b in corners):
                continue
            pairs = tuple((int(origin[a, b]), int(fate[a, b])) for a, b in corners)
            if len(set(pairs)) != 4:
                continue
            channels = set()
            for o, f in pairs:
                channels.add(o)
                channels.add(f)
            if len(channels) != 2:
                continue
            a, b = sorted(channels)
            if {(a, a), (b, b), (a, b), (b, a)} != set(pairs):
                continue
            ok = True
            for i in range(4):
                o1, f1 = pairs[i]
                o2, f2 = pairs[(i + 1) % 4]
                if (o1 != o2) + (f1 != f2) != 1:
                    ok = False
                    break
            if not ok:
                continue
            cx = 0.5 * (grid.xs[ix] + grid.xs[ix + 1])
            cp = 0.5 * (grid.pxs[jp] + grid.pxs[jp + 1])
            nodes.append(
                CornerNode(
                    cell_coords=(float(cx), float(cp)),
                    quadrant_pattern=pairs,
                    channels=(a, b),
                    section=grid.spec,
                    cell_diagonal=diag,
                )
            )
    return nodes


def _tighten(settings: IntegrationSettings) -> IntegrationSettings:
    """Orbit refinement needs residuals below 1e-10 in all four coordinates.

    The limiting term is absolute energy drift over one period (it leaks into
    the reconstructed py at the section), so the refinement legs run at
    tighter tolerances than grid classification.
    """
    from dataclasses import replace

    return replace(
        settings,
        rel_tol=min(settings.rel_tol, 1e-12),
        abs_tol=min(settings.abs_tol, 1e-14),
    )


def _lift(z, spec: SectionSpec, p: SystemParams) -> np.ndarray:
    x, px = z
    py = solve_py(x, spec.y_value, px, spec.py_sign, p)
    if py is None:
        raise NoReturn(f"section point {z} is outside the energy shell")
    return np.array([x, spec.y_value, px, py])


def _apex_candidates(grid: OFMGrid, channels, layer: int = 0):
    """Centers of plaquettes where an origin and a fate boundary coincide.

    These are weaker matches than full corner nodes (three of the four
    quadrant colors suffice) and localize the manifold crossing to one cell.
    """
    origin = grid.origin[layer]
    fate = grid.fate[layer]
    pts = []
    for ix in range(grid.nx - 1):
        for jp in range(grid.npx - 1):
            corners = ((ix, jp), (ix + 1, jp), (ix + 1, jp + 1), (ix, jp + 1))
            if not all(_resolved(grid, layer, a, b) for a, b in corners):
                continue
            pairs = [(int(origin[a, b]), int(fate[a, b])) for a, b in corners]
            chans = set()
            for o, f in pairs:
                chans.add(o)
                chans.add(f)
            if len(chans) != 2:
                continue
            if channels is not None and chans != set(channels):
                continue
            if len({o for o, _ in pairs}) < 2 or len({f for _, f in pairs}) < 2:
                continue
            if len(set(pairs)) < 3:
                continue
            cx = 0.5 * (grid.xs[ix] + grid.xs[ix + 1])
            cp = 0.5 * (grid.pxs[jp] + grid.pxs[jp + 1])
            pts.append((cx, cp))
    return pts


def hunt_corner_node(
    p: SystemParams = SystemParams(),
    settings: IntegrationSettings = IntegrationSettings(),
    y_value: float = 2.0,
    py_sign: int = 1,
    x_range: tuple[float, float] | None = None,
    px_range: tuple[float, float] | None = None,
    channels: tuple[int, int] | None = (2, 4),
    base_res: int = 120,
    zoom_res: int = 48,
    max_depth: int = 3,
) -> CornerNode:
    """Locate a corner node by scan, zoom and sub-cell window offsets.

    The strict 2x2 pattern only fires when the manifold crossing falls in the
    right sub-cell position, so each zoom level rescans a small window at a
    few fractional-cell shifts.  Raises :class:`NoReturn`-free ``LookupError``
    when no node isolates within ``max_depth`` zooms.
    """
    from .section import allowed_window, compute_ofm

    if x_range is None or px_range is None:
        win = allowed_window(y_value, p)
        if win is None:
            raise LookupError(f"section y = {y_value} does not intersect the shell")
        xr, pr = win
        if x_range is None:
            # positive-x band: the top-right channel side
            x_range = (0.0, xr[1])
        if px_range is None:
            px_range = pr

    spec = SectionSpec(
        y_value=y_value, py_sign=py_sign, x_range=x_range, px_range=px_range,
        nx=base_res, npx=base_res,
    )
    grid = compute_ofm(spec, settings, p)
    nodes = [n for n in scan_corner_nodes(grid) if channels is None or set(n.channels) == set(channels)]
    if nodes:
        return nodes[0]
    cands = _apex_candidates(grid, channels)
    if not cands:
        raise LookupError("no manifold crossing found in the scan window")
    apex = np.mean(np.asarray(cands), axis=0)
    hx = (x_range[1] - x_range[0]) / (base_res - 1)
    hp = (px_range[1] - px_range[0]) / (base_res - 1)

    for _ in range(max_depth):
        half_x = 6.0 * hx
        half_p = 6.0 * hp
        hx_new = 2.0 * half_x / (zoom_res - 1)
        hp_new = 2.0 * half_p / (zoom_res - 1)
        for i in range(4):
            for j in range(4):
                ox = (i / 4.0) * hx_new
                op = (j / 4.0) * hp_new
                zspec = SectionSpec(
                    y_value=y_value,
                    py_sign=py_sign,
                    x_range=(apex[0] - half_x + ox, apex[0] + half_x + ox),
                    px_range=(apex[1] - half_p + op, apex[1] + half_p + op),
                    nx=zoom_res,
                    npx=zoom_res,
                )
                zgrid = compute_ofm(zspec, settings, p)
                nodes = [
                    n for n in scan_corner_nodes(zgrid)
                    if channels is None or set(n.channels) == set(channels)
                ]
                if nodes:
                    nodes.sort(key=lambda n: (n.cell_coords[0] - apex[0]) ** 2
                               + (n.cell_coords[1] - apex[1]) ** 2)
                    return nodes[0]
                cands = _apex_candidates(zgrid, channels)
                if cands:
                    apex = np.mean(np.asarray(cands), axis=0)
        hx, hp = hx_new, hp_new
    raise LookupError("corner node failed to isolate; try a finer base resolution")


def _return_map_full(z, spec: SectionSpec, p: SystemParams,
                     settings: IntegrationSettings, t_max: float):
    y0 = _lift(z, spec, p)
    status, _, t_end, y_end, drift, _, _ = k._propagate(
        y0,
        t_max,
        settings.rel_tol,
        settings.abs_tol,
        p.c1,
        p.c2,
        p.c3,
        p.lam,
        settings.energy_drift_tol,
        settings.escape_radius,
        spec.y_value,
        float(spec.py_sign),
        settings.event_time_tol,
        0.0,
        k._EMPTY_TS,
        k._EMPTY_YS,
    )
    if status != k.STATUS_PLANE:
        raise NoReturn(
            f"trajectory from {z} did not recross the section "
            f"(status {status} at t = {t_end:.4g})"
        )
    return y_end, t_end, y0


def poincare_map(
    z,
    spec: SectionSpec,
    p: SystemParams = SystemParams(),
    settings: IntegrationSettings = IntegrationSettings(),
    t_max: float = 50.0,
):
    """Next intersection (x, px) with the section, matching the py sign."""
    y_end, _, _ = _return_map_full(z, spec, p, settings, t_max)
    return (float(y_end[0]), float(y_end[2]))


def refine_upo(
    seed,
    p: SystemParams = SystemParams(),
    settings: IntegrationSettings = IntegrationSettings(),
    section: SectionSpec | None = None,
    tol: float = 1e-11,
    fd_step: float = 1e-7,
    max_iter: int = 50,
    t_max: float = 50.0,
    n_samples: int = 2001,
) -> UPOrbit:
    """Newton-refine a corner-node seed (or raw (x, px) guess) into a UPOrbit."""
    if isinstance(seed, CornerNode):
        z = np.array(seed.cell_coords)
        spec = seed.section
    else:
        z = np.asarray(seed, dtype=float)
        if section is None:
            raise ValueError("a SectionSpec is required when seeding from raw coordinates")
        spec = section
    settings = _tighten(settings)

    def fmap(zz):
        y_end, t_end, _ = _return_map_full(zz, spec, p, settings, t_max)
        return np.array([y_end[0], y_end[2]]), t_end

    resid = math.inf
    converged = False
    for _ in range(max_iter):
        try:
            pz, t_ret = fmap(z)
        except NoReturn as exc:
            raise NewtonDiverged(f"return map lost the orbit at z = {z}: {exc}") from exc
        F = pz - z
        resid = float(np.max(np.abs(F)))
        if resid < tol:
            converged = True
            break
        J = np.empty((2, 2))
        for i in range(2):
            dz = z.copy()
            dz[i] += fd_step
            try:
                pdz, _ = fmap(dz)
            except NoReturn as exc:
                raise NewtonDiverged(f"finite-difference probe left the basin at {dz}") from exc
            J[:, i] = (pdz - pz) / fd_step
        try:
            step = np.linalg.solve(J - np.eye(2), -F)
        except np.linalg.LinAlgError as exc:
            raise NewtonDiverged("singular Newton system") from exc
        if not np.all(np.isfinite(step)) or np.max(np.abs(step)) > 1.0:
            raise NewtonDiverged(f"Newton step blew up: {step}")
        z = z + step
    if not converged:
        raise NewtonDiverged(f"no convergence after {max_iter} iterations, residual {resid:.3e}")

    y_end, period, y0 = _return_map_full(z, spec, p, settings, t_max)
    residual = float(np.max(np.abs(y_end - y0)))

    ts = np.linspace(0.0, period, int(n_samples))
    ys = np.empty((len(ts), 4))
    status, _, _, _, _, nfill, _ = k._propagate(
        y0, period, settings.rel_tol, settings.abs_tol,
        p.c1, p.c2, p.c3, p.lam,
        math.inf, 0.0, 0.0, 0.0, settings.event_time_tol, 0.0, ts, ys,
    )
    times = ts[:nfill]
    states = ys[:nfill].copy()

    yvar = np.zeros(20)
    yvar[:4] = y0
    yvar[4] = yvar[9] = yvar[14] = yvar[19] = 1.0
    st_var, yv = k._propagate_var(
        yvar, period, settings.rel_tol, settings.abs_tol, p.c1, p.c2, p.c3, p.lam
    )
    if st_var != k.STATUS_TIMEOUT:
        raise NewtonDiverged("variational integration failed over one period")
    monodromy = yv[4:].reshape(4, 4).copy()
    eigs = np.linalg.eigvals(monodromy)
    mu = eigs[np.argmax(np.abs(eigs))]
    floquet = float(mu.real)

    imin = int(np.argmin(states[:, 0]))
    imax = int(np.argmax(states[:, 0]))
    lo, hi = (imin, imax) if imin < imax else (imax, imin)
    branch = states[lo : hi + 1]
    order = np.argsort(branch[:, 0])
    bx = branch[order, 0]
    by = branch[order, 1]
    keep = np.concatenate(([True], np.diff(bx) > 1e-12))
    arc_x = bx[keep]
    arc_y = by[keep]
    if arc_x[-1] - arc_x[0] < 1e-6:
        raise DegenerateOrbit("orbit has no usable x extent")

    return UPOrbit(
        section_point=(float(z[0]), float(z[1])),
        period=float(period),
        times=times,
        states=states,
        floquet_multiplier=floquet,
        monodromy=monodromy,
        residual=residual,
        params=p,
        section=spec,
        arc_x=arc_x,
        arc_y=arc_y,
    )


def continue_upo(
    orbit: UPOrbit,
    new_lambda: float,
    settings: IntegrationSettings = IntegrationSettings(),
    step: float = 0.005,
    min_step: float = 1e-5,
) -> UPOrbit:
    """Follow the orbit family to a new stretching by stepwise re-refinement."""
    current = orbit
    lam = orbit.params.lam
    target = float(new_lambda)
    h = math.copysign(min(step, abs(target - lam)), target - lam) if target != lam else 0.0
    while lam != target:
        nxt = target if abs(target - lam) <= abs(h) else lam + h
        try:
            refined = refine_upo(
                current.section_point,
                p=current.params.with_lambda(nxt),
                settings=settings,
                section=current.section,
            )
        except NewtonDiverged:
            h *= 0.5
            if abs(h) < min_step:
                raise ContinuationStalled(
                    f"continuation stalled at lambda = {lam:.6f}", partial=current
                )
            continue
        current = refined
        lam = nxt
        if lam != target:
            h = math.copysign(min(step, 2.0 * abs(h)), target - lam)
    return current


def save_upo(path, orbit: UPOrbit) -> None:
    """Plain-text cache: six header lines then one 't x y px py' row per sample."""
    with open(path, "w") as fh:
        fh.write("# upo v1\n")
        fh.write(f"# lambda {float(orbit.params.lam)!r}\n")
        fh.write(f"# energy {float(orbit.params.energy)!r}\n")
        fh.write(f"# period {float(orbit.period)!r}\n")
        fh.write(f"# multiplier {float(orbit.floquet_multiplier)!r}\n")
        fh.write(f"# residual {float(orbit.residual)!r}\n")
        for t, row in zip(orbit.times, orbit.states):
            fh.write(
                f"{float(t)!r} {float(row[0])!r} {float(row[1])!r} "
                f"{float(row[2])!r} {float(row[3])!r}\n"
            )


def load_upo(path, base_params: SystemParams = SystemParams()) -> UPOrbit:
    """Rebuild a UPOrbit from a cache file written by :func:`save_upo`."""
    header: dict[str, float] = {}
    rows = []
    with open(path) as fh:
        first = fh.readline().strip()
        if first != "# upo v1":
            raise ValueError(f"not a upo v1 cache: {path}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                _, key, val = line.split(None, 2)
                header[key] = float(val)
            else:
                rows.append([float(v) for v in line.split()])
    data = np.asarray(rows)
    if data.shape[0] < 2 or data.shape[1] != 5:
        raise ValueError(f"malformed upo cache: {path}")
    times = data[:, 0]
    states = data[:, 1:]
    params = SystemParams(
        c1=base_params.c1,
        c2=base_params.c2,
        c3=base_params.c3,
        lam=header["lambda"],
        energy=header["energy"],
    )
    section = SectionSpec(
        y_value=float(states[0, 1]),
        py_sign=1 if states[0, 3] >= 0 else -1,
        x_range=(-1.0, 1.0),
        px_range=(-1.0, 1.0),
        nx=2,
        npx=2,
    )
    imin = int(np.argmin(states[:, 0]))
    imax = int(np.argmax(states[:, 0]))
    lo, hi = (imin, imax) if imin < imax else (imax, imin)
    branch = states[lo : hi + 1]
    order = np.argsort(branch[:, 0])
    bx = branch[order, 0]
    by = branch[order, 1]
    keep = np.concatenate(([True], np.diff(bx) > 1e-12))
    return UPOrbit(
        section_point=(float(states[0, 0]), float(states[0, 2])),
        period=header["period"],
        times=times,
        states=states,
        floquet_multiplier=header["multiplier"],
        monodromy=np.eye(4),
        residual=header["residual"],
        params=params,
        section=section,
        arc_x=bx[keep],
        arc_y=by[keep],
    )
