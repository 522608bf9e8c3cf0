"""Lagrangian descriptor fields and gradient-ridge extraction.

The descriptor accumulates |xdot|^p + |ydot|^p along the trajectory forward
and backward over [-tau_ld, tau_ld], truncating each leg at escape so values
stay finite and ridges concentrate on the invariant manifolds.  Ridges of the
forward part trace stable manifolds and therefore fate boundaries of the OFM;
the backward part mirrors this for origins.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as k
from .dynamics import SystemParams
from .errors import ClassificationFailed
from .integrate import IntegrationSettings
from .pods import PodsSpec, build_pods_points
from .section import STATUS_FORBIDDEN, STATUS_OK, SectionSpec, build_section_states

FORBIDDEN_VALUE = -1.0  # sentinel; genuine descriptor values are >= 0


@dataclass
class LdField:
    """Descriptor values on a section or PODS grid; forbidden cells hold -1."""

    spec: object
    xs: np.ndarray
    pxs: np.ndarray
    values: np.ndarray
    forward: np.ndarray
    backward: np.ndarray
    status: np.ndarray
    tau_ld: float
    p_exponent: float
    params: SystemParams

    @property
    def n_layers(self) -> int:
        return self.values.shape[0]


def ld_field(
    spec,
    tau_ld: float = 10.0,
    p_exponent: float = 0.5,
    settings: IntegrationSettings = IntegrationSettings(),
    p: SystemParams = SystemParams(),
    max_fail_fraction: float = 0.01,
) -> LdField:
    """Descriptor field over a SectionSpec or PodsSpec grid."""
    if isinstance(spec, SectionSpec):
        xs, pxs, states, valid = build_section_states(spec, p)
        n_layers = 1
        nx, npx = spec.nx, spec.npx
    elif isinstance(spec, PodsSpec):
        xs, pxs, states, valid = build_pods_points(spec)
        n_layers = len(spec.branch_signs)
        nx, npx = spec.nx, spec.npx
        p = spec.orbit.params
    else:
        raise TypeError(f"unsupported grid spec {type(spec)!r}")

    n = states.shape[0]
    fwd = np.zeros(n)
    bwd = np.zeros(n)
    fail = np.zeros(n, dtype=np.uint8)
    k._ld_grid(
        states,
        valid,
        float(tau_ld),
        float(p_exponent),
        settings.rel_tol,
        settings.abs_tol,
        settings.energy_drift_tol,
        settings.escape_radius,
        settings.event_time_tol,
        p.c1,
        p.c2,
        p.c3,
        p.lam,
        fwd,
        bwd,
        fail,
    )
    n_failed = int(fail.sum())
    n_valid = int(valid.sum())
    if n_valid and n_failed > max_fail_fraction * n_valid:
        raise ClassificationFailed(f"{n_failed} of {n_valid} descriptor cells failed")

    shape = (n_layers, nx, npx)
    ok = valid.reshape(shape).astype(bool)
    status = np.where(ok, STATUS_OK, STATUS_FORBIDDEN).astype(np.uint8)
    fwd = fwd.reshape(shape)
    bwd = bwd.reshape(shape)
    values = np.where(ok, fwd + bwd, FORBIDDEN_VALUE)
    fwd = np.where(ok, fwd, FORBIDDEN_VALUE)
    bwd = np.where(ok, bwd, FORBIDDEN_VALUE)
    return LdField(
        spec=spec,
        xs=xs,
        pxs=pxs,
        values=values,
        forward=fwd,
        backward=bwd,
        status=status,
        tau_ld=float(tau_ld),
        p_exponent=float(p_exponent),
        params=p,
    )


def gradient_magnitude(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude in cell units, one-sided at edges.

    Differences never reach across forbidden cells; isolated valid cells get
    gradient 0.
    """
    nx, npx = values.shape
    grad = np.zeros((nx, npx))
    for axis in (0, 1):
        v = values if axis == 0 else values.T
        m = valid if axis == 0 else valid.T
        out = np.zeros(v.shape)
        for i in range(v.shape[0]):
            for j in range(v.shape[1]):
                if not m[i, j]:
                    continue
                lo = i - 1 if i - 1 >= 0 and m[i - 1, j] else i
                hi = i + 1 if i + 1 < v.shape[0] and m[i + 1, j] else i
                if hi == lo:
                    continue
                out[i, j] = (v[hi, j] - v[lo, j]) / (hi - lo)
        d = out if axis == 0 else out.T
        grad += d * d
    return np.sqrt(grad)


def extract_ridges(field: LdField, gradient_percentile: float = 95.0, part: str = "total") -> np.ndarray:
    """Boolean ridge mask: cells whose gradient magnitude exceeds the percentile.

    ``part`` selects which accumulation to differentiate: "total", "forward"
    or "backward".
    """
    src = {"total": field.values, "forward": field.forward, "backward": field.backward}[part]
    mask = np.zeros(src.shape, dtype=bool)
    for layer in range(src.shape[0]):
        valid = field.status[layer] == STATUS_OK
        if not valid.any():
            continue
        grad = gradient_magnitude(src[layer], valid)
        gv = grad[valid]
        cut = np.percentile(gv, gradient_percentile)
        if cut <= 0.0:
            continue  # flat field: no ridges
        mask[layer] = valid & (grad > cut)
    return mask
