"""Origin-fate maps over constant-y surfaces of section.

Grids are uniform in (x, px); the remaining momentum is closed from the
energy shell with a chosen sign.  Cells whose radicand 2(E - V) - px^2 is
negative are energetically forbidden and skipped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as k
from .classify import OriginFateIndex
from .dynamics import SystemParams, potential
from .errors import ClassificationFailed, EmptyGrid
from .integrate import IntegrationSettings

STATUS_OK = 0
STATUS_FORBIDDEN = 1
STATUS_FAILED = 2
STATUS_NAMES = {STATUS_OK: "ok", STATUS_FORBIDDEN: "forbidden", STATUS_FAILED: "failed"}
STATUS_CODES = {v: k_ for k_, v in STATUS_NAMES.items()}


@dataclass(frozen=True)
class SectionSpec:
    """Poincare section y = y_value with sign(py) = py_sign."""

    y_value: float
    py_sign: int = 1
    x_range: tuple[float, float] = (-4.0, 4.0)
    px_range: tuple[float, float] = (-8.0, 8.0)
    nx: int = 300
    npx: int = 300

    def __post_init__(self):
        if self.nx < 2 or self.npx < 2:
            raise ValueError("grid resolutions must be at least 2")
        if not (self.x_range[1] > self.x_range[0] and self.px_range[1] > self.px_range[0]):
            raise ValueError("coordinate ranges must be non-degenerate")
        if self.py_sign not in (1, -1):
            raise ValueError("py_sign must be +1 or -1")


def grid_axis(lo: float, hi: float, n: int) -> np.ndarray:
    """Inclusive linear spacing; exactly antisymmetric when the range is.

    Mirror symmetry of classification grids is checked at the bit level, so
    for a symmetric range the negative half is built by negating the positive
    half rather than trusting linspace rounding.
    """
    if lo == -hi:
        xs = np.linspace(lo, hi, n)
        for i in range(n // 2):
            xs[i] = -xs[n - 1 - i]
        if n % 2 == 1:
            xs[n // 2] = 0.0
        return xs
    return np.linspace(lo, hi, n)


def solve_py(x: float, y: float, px: float, sign: int, p: SystemParams):
    """Close the energy shell: sign * sqrt(2(E - V) - px^2), or None if forbidden."""
    rad = 2.0 * (p.energy - potential((x, y), p)) - px * px
    if rad < 0.0:
        return None
    return float(sign) * math.sqrt(rad)


@dataclass
class OFMGrid:
    """Classified grid over a section or dividing surface.

    Arrays are indexed ``[layer, ix, ipx]``; sections have a single layer,
    dividing surfaces with both momentum branches have two (layer order
    matches ``layer_signs``).
    """

    spec: object
    xs: np.ndarray
    pxs: np.ndarray
    origin: np.ndarray
    fate: np.ndarray
    status: np.ndarray
    layer_signs: tuple[int, ...]
    params: SystemParams
    settings: IntegrationSettings
    n_failed: int = 0

    @property
    def n_layers(self) -> int:
        return self.origin.shape[0]

    @property
    def nx(self) -> int:
        return len(self.xs)

    @property
    def npx(self) -> int:
        return len(self.pxs)

    def index_at(self, ix: int, ipx: int, layer: int = 0) -> OriginFateIndex:
        return OriginFateIndex(int(self.origin[layer, ix, ipx]), int(self.fate[layer, ix, ipx]))

    def classified_mask(self) -> np.ndarray:
        return self.status == STATUS_OK

    def count_pairs(self) -> dict[tuple[int, int], int]:
        ok = self.classified_mask()
        pairs: dict[tuple[int, int], int] = {}
        os = self.origin[ok].ravel()
        fs = self.fate[ok].ravel()
        for o, f in zip(os.tolist(), fs.tolist()):
            pairs[(o, f)] = pairs.get((o, f), 0) + 1
        return pairs


def allowed_window(y_value: float, p: SystemParams, pad: float = 0.02):
    """Full energetically allowed (x, px) window on the section y = y_value.

    Along the section the potential is an upward quartic in x, so the outer
    boundary solves a quadratic in x^2 in closed form.  Returns
    ``(x_range, px_range)`` or None when the section misses the shell.
    """
    lam = p.lam
    alpha = -p.c3 * lam ** 4
    beta = lam * lam * (p.c1 + 6.0 * p.c3 * y_value * y_value)
    v0 = p.c1 * y_value * y_value + p.c2 * y_value - p.c3 * y_value ** 4
    gamma = v0 - p.energy
    disc = beta * beta - 4.0 * alpha * gamma
    if disc < 0.0:
        return None
    t_hi = (-beta + math.sqrt(disc)) / (2.0 * alpha)
    if t_hi <= 0.0:
        return None
    x_max = math.sqrt(t_hi)
    # minimum of V over the allowed band: either the inner edge (x=0 or the
    # V=E contour) or the parabola vertex in t = x^2 when it falls inside
    v_min = min(v0, p.energy)
    t_vertex = -beta / (2.0 * alpha)
    if 0.0 < t_vertex < t_hi:
        v_min = min(v_min, alpha * t_vertex * t_vertex + beta * t_vertex + v0)
    p_max = math.sqrt(max(0.0, 2.0 * (p.energy - v_min)))
    dx = pad * 2.0 * x_max
    dp = pad * 2.0 * p_max
    return (-(x_max + dx), x_max + dx), (-(p_max + dp), p_max + dp)


def build_section_states(spec: SectionSpec, p: SystemParams):
    """Phase-space lift of the section grid; returns (xs, pxs, states, valid)."""
    xs = grid_axis(spec.x_range[0], spec.x_range[1], spec.nx)
    pxs = grid_axis(spec.px_range[0], spec.px_range[1], spec.npx)
    n = spec.nx * spec.npx
    states = np.zeros((n, 4))
    valid = np.zeros(n, dtype=np.uint8)
    vx = np.array([potential((x, spec.y_value), p) for x in xs])
    for ix, x in enumerate(xs):
        base = ix * spec.npx
        for jp, px in enumerate(pxs):
            rad = 2.0 * (p.energy - vx[ix]) - px * px
            if rad < 0.0:
                continue
            idx = base + jp
            states[idx, 0] = x
            states[idx, 1] = spec.y_value
            states[idx, 2] = px
            states[idx, 3] = spec.py_sign * math.sqrt(rad)
            valid[idx] = 1
    return xs, pxs, states, valid


def _classify_states(states, valid, settings: IntegrationSettings, p: SystemParams):
    n = states.shape[0]
    origin = np.zeros(n, dtype=np.int8)
    fate = np.zeros(n, dtype=np.int8)
    fail = np.zeros(n, dtype=np.uint8)
    k._classify_grid(
        states,
        valid,
        settings.max_time,
        settings.rel_tol,
        settings.abs_tol,
        settings.energy_drift_tol,
        settings.escape_radius,
        settings.event_time_tol,
        p.c1,
        p.c2,
        p.c3,
        p.lam,
        origin,
        fate,
        fail,
    )
    return origin, fate, fail


def compute_ofm(
    spec: SectionSpec,
    settings: IntegrationSettings = IntegrationSettings(),
    p: SystemParams = SystemParams(),
    max_fail_fraction: float = 0.01,
) -> OFMGrid:
    """Classify every energetically allowed cell of the section grid."""
    xs, pxs, states, valid = build_section_states(spec, p)
    origin, fate, fail = _classify_states(states, valid, settings, p)

    shape = (1, spec.nx, spec.npx)
    status = np.full(shape, STATUS_FORBIDDEN, dtype=np.uint8)
    ok = valid.reshape(spec.nx, spec.npx).astype(bool)
    failed = fail.reshape(spec.nx, spec.npx).astype(bool)
    status[0][ok] = STATUS_OK
    status[0][failed] = STATUS_FAILED
    n_failed = int(failed.sum())
    n_valid = int(ok.sum())
    if n_valid and n_failed > max_fail_fraction * n_valid:
        raise ClassificationFailed(f"{n_failed} of {n_valid} cells failed to integrate")

    grid = OFMGrid(
        spec=spec,
        xs=xs,
        pxs=pxs,
        origin=origin.reshape(shape),
        fate=fate.reshape(shape),
        status=status,
        layer_signs=(spec.py_sign,),
        params=p,
        settings=settings,
        n_failed=n_failed,
    )
    return grid


def index_fractions(grid: OFMGrid) -> dict[tuple[int, int], float]:
    """Fraction of classified cells carrying each origin-fate pair."""
    counts = grid.count_pairs()
    total = sum(counts.values())
    if total == 0:
        raise EmptyGrid("no classified cells on the grid")
    return {pair: c / total for pair, c in sorted(counts.items())}
