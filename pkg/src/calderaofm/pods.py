"""Periodic orbit dividing surfaces, branching fractions and the critical stretching.

The PODS of a brake orbit is the energy-shell set of phase points whose
positions lie on the orbit arc: y is a function of x along the arc, and at
each (x, y(x)) every energetically permitted momentum pair is included.  The
grid is uniform in (x, px) per py branch; fractions are uniform cell counts
over classified cells, with unresolved counts reported alongside.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

from .dynamics import SystemParams, potential
from .errors import (
    ClassificationFailed,
    ContinuationStalled,
    DegenerateOrbit,
    InvalidBracket,
    NoReactiveCells,
)
from .integrate import IntegrationSettings
from .section import (
    OFMGrid,
    STATUS_FAILED,
    STATUS_FORBIDDEN,
    STATUS_OK,
    _classify_states,
    grid_axis,
)
from .upo import UPOrbit, continue_upo

BRANCH_ORDER = (1, -1)  # layer order when both momentum branches are gridded


@dataclass(frozen=True)
class PodsSpec:
    """Grid specification over the dividing surface of one orbit."""

    orbit: UPOrbit
    py_branch: object = -1  # +1, -1 or "both"
    nx: int = 200
    npx: int = 200

    def __post_init__(self):
        if self.py_branch not in (1, -1, "both"):
            raise ValueError("py_branch must be +1, -1 or 'both'")
        if self.nx < 2 or self.npx < 2:
            raise ValueError("grid resolutions must be at least 2")

    @property
    def branch_signs(self) -> tuple[int, ...]:
        if self.py_branch == "both":
            return BRANCH_ORDER
        return (int(self.py_branch),)


@dataclass(frozen=True)
class BranchingRecord:
    lam: float
    fractions: dict
    f_23: float
    n_origin: int
    n_target: int
    n_unresolved: int


def pods_axes(spec: PodsSpec):
    """Grid axes and the per-column momentum budget p2(x) = 2(E - V(x, y(x)))."""
    orbit = spec.orbit
    x_lo, x_hi = orbit.x_extent
    if x_hi - x_lo < 1e-6:
        raise DegenerateOrbit("orbit x extent is below 1e-6")
    p = orbit.params
    y_of_x = PchipInterpolator(orbit.arc_x, orbit.arc_y)
    xs = grid_axis(x_lo, x_hi, spec.nx)
    ys = y_of_x(xs)
    p2 = np.array([2.0 * (p.energy - potential((x, y), p)) for x, y in zip(xs, ys)])
    p2 = np.maximum(p2, 0.0)
    p_max = math.sqrt(float(p2.max()))
    pxs = grid_axis(-p_max, p_max, spec.npx)
    return xs, ys, pxs, p2


def build_pods_points(spec: PodsSpec):
    """Phase-space states for every grid cell of every requested branch.

    Returns (xs, pxs, states, valid) with states of shape
    (n_branches * nx * npx, 4); forbidden cells have valid = 0.
    """
    xs, ys, pxs, p2 = pods_axes(spec)
    signs = spec.branch_signs
    n = len(signs) * spec.nx * spec.npx
    states = np.zeros((n, 4))
    valid = np.zeros(n, dtype=np.uint8)
    for il, sign in enumerate(signs):
        base_l = il * spec.nx * spec.npx
        for ix in range(spec.nx):
            base = base_l + ix * spec.npx
            for jp, px in enumerate(pxs):
                rad = p2[ix] - px * px
                if rad < 0.0:
                    continue
                idx = base + jp
                states[idx, 0] = xs[ix]
                states[idx, 1] = ys[ix]
                states[idx, 2] = px
                states[idx, 3] = sign * math.sqrt(rad)
                valid[idx] = 1
    return xs, pxs, states, valid


def compute_ofm_pods(
    spec: PodsSpec,
    settings: IntegrationSettings = IntegrationSettings(),
    p: SystemParams | None = None,
    max_fail_fraction: float = 0.01,
) -> OFMGrid:
    """Origin-fate map over the dividing surface grid."""
    params = spec.orbit.params
    if p is not None and p != params:
        raise ValueError("params disagree with the orbit's parameters")
    xs, pxs, states, valid = build_pods_points(spec)
    origin, fate, fail = _classify_states(states, valid, settings, params)

    n_layers = len(spec.branch_signs)
    shape = (n_layers, spec.nx, spec.npx)
    status = np.full(shape, STATUS_FORBIDDEN, dtype=np.uint8)
    ok = valid.reshape(shape).astype(bool)
    failed = fail.reshape(shape).astype(bool)
    status[ok] = STATUS_OK
    status[failed] = STATUS_FAILED
    n_failed = int(failed.sum())
    n_valid = int(ok.sum())
    if n_valid and n_failed > max_fail_fraction * n_valid:
        raise ClassificationFailed(f"{n_failed} of {n_valid} cells failed to integrate")

    return OFMGrid(
        spec=spec,
        xs=xs,
        pxs=pxs,
        origin=origin.reshape(shape),
        fate=fate.reshape(shape),
        status=status,
        layer_signs=spec.branch_signs,
        params=params,
        settings=settings,
        n_failed=n_failed,
    )


def branching_fraction(grid: OFMGrid, origin: int = 2, fate: int = 3) -> BranchingRecord:
    """Fraction of trajectories from ``origin`` that exit through ``fate``.

    Cells with an unresolved fate are excluded from the denominator and
    reported in ``n_unresolved``.
    """
    ok = grid.classified_mask()
    from_origin = ok & (grid.origin == origin)
    resolved = from_origin & (grid.fate != 0)
    n_origin = int(resolved.sum())
    n_unresolved = int((from_origin & (grid.fate == 0)).sum())
    if n_origin == 0:
        raise NoReactiveCells(f"no cells with origin {origin} and resolved fate")
    n_target = int((resolved & (grid.fate == fate)).sum())

    counts: dict = {}
    os = grid.origin[ok].ravel()
    fs = grid.fate[ok].ravel()
    for o, f in zip(os.tolist(), fs.tolist()):
        counts[(o, f)] = counts.get((o, f), 0) + 1
    total = sum(counts.values())
    fractions = {pair: c / total for pair, c in sorted(counts.items())}

    return BranchingRecord(
        lam=grid.params.lam,
        fractions=fractions,
        f_23=n_target / n_origin,
        n_origin=n_origin,
        n_target=n_target,
        n_unresolved=n_unresolved,
    )


def sweep_lambda(
    lambda_values,
    base_orbit: UPOrbit,
    settings: IntegrationSettings = IntegrationSettings(),
    nx: int = 200,
    npx: int = 200,
    py_branch: object = "both",
    progress=None,
) -> list[BranchingRecord]:
    """Branching fraction along a descending stretching sweep.

    The orbit is continued from value to value; on a continuation stall the
    records collected so far ride along on the raised error.
    """
    records: list[BranchingRecord] = []
    orbit = base_orbit
    for lam in lambda_values:
        try:
            orbit = continue_upo(orbit, float(lam), settings=settings)
        except ContinuationStalled as exc:
            exc.partial = records
            raise
        spec = PodsSpec(orbit=orbit, py_branch=py_branch, nx=nx, npx=npx)
        grid = compute_ofm_pods(spec, settings)
        rec = branching_fraction(grid)
        records.append(rec)
        if progress is not None:
            progress(rec)
    return records


class _FractionCache:
    """Continuation-aware f_23 evaluator used by the bisection driver."""

    def __init__(self, base_orbit, settings, nx, npx, py_branch="both"):
        self.settings = settings
        self.nx = nx
        self.npx = npx
        self.py_branch = py_branch
        self.orbits = {round(base_orbit.params.lam, 12): base_orbit}

    def orbit_at(self, lam: float) -> UPOrbit:
        key = round(lam, 12)
        if key not in self.orbits:
            nearest = min(self.orbits, key=lambda l: abs(l - lam))
            self.orbits[key] = continue_upo(self.orbits[nearest], lam, settings=self.settings)
        return self.orbits[key]

    def __call__(self, lam: float) -> float:
        orbit = self.orbit_at(lam)
        spec = PodsSpec(orbit=orbit, py_branch=self.py_branch, nx=self.nx, npx=self.npx)
        grid = compute_ofm_pods(spec, self.settings)
        return branching_fraction(grid).f_23


def find_critical_lambda(
    bracket,
    tol: float = 1e-3,
    threshold: float = 1e-4,
    base_orbit: UPOrbit | None = None,
    settings: IntegrationSettings = IntegrationSettings(),
    nx: int = 200,
    npx: int = 200,
    f23=None,
) -> float:
    """Bisect the indicator f_23(lambda) > threshold down to a bracket of width tol.

    ``f23`` may be any callable lambda -> fraction; by default it is the full
    pipeline (orbit continuation + both-branch PODS map) seeded from
    ``base_orbit``.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise InvalidBracket(f"need lambda_lo < lambda_hi, got {bracket}")
    if hi - lo < tol:
        return 0.5 * (lo + hi)
    if f23 is None:
        if base_orbit is None:
            raise ValueError("either f23 or base_orbit must be provided")
        f23 = _FractionCache(base_orbit, settings, nx, npx)
    if not f23(lo) > threshold:
        raise InvalidBracket(f"f_23({lo}) must exceed the threshold {threshold}")
    if f23(hi) > threshold:
        raise InvalidBracket(f"f_23({hi}) must not exceed the threshold {threshold}")
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if f23(mid) > threshold:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
