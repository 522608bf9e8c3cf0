"""Caldera Hamiltonian: potential, gradients, equations of motion, critical points.

The potential is a stretched four-exit caldera,

    V(x, y) = c1*(l^2 x^2 + y^2) + c2*y - c3*(l^4 x^4 + y^4 - 6 l^2 x^2 y^2),

with unit-mass kinetic energy px^2/2 + py^2/2.  The stretching factor l
(``lam``) only ever enters through u = l*x, so the whole family is the l=1
landscape with the x axis rescaled.  All functions here are pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CriticalPointSearchFailed

DEFAULT_C1 = 5.0
DEFAULT_C2 = 3.0
DEFAULT_C3 = -0.3
DEFAULT_ENERGY = 29.0


@dataclass(frozen=True)
class SystemParams:
    """Caldera constants, stretching factor and total energy."""

    c1: float = DEFAULT_C1
    c2: float = DEFAULT_C2
    c3: float = DEFAULT_C3
    lam: float = 1.0
    energy: float = DEFAULT_ENERGY

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ValueError(f"stretching factor must be positive, got {self.lam}")
        if not math.isfinite(self.energy):
            raise ValueError("energy must be finite")

    def with_lambda(self, lam: float) -> "SystemParams":
        return replace(self, lam=float(lam))


@dataclass(frozen=True)
class PhaseState:
    """A point (x, y, px, py) in the four-dimensional phase space."""

    x: float
    y: float
    px: float
    py: float

    def __post_init__(self):
        for name in ("x", "y", "px", "py"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite component {name!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.px, self.py], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "PhaseState":
        x, y, px, py = (float(v) for v in arr)
        return cls(x, y, px, py)

    def time_reversed(self) -> "PhaseState":
        return PhaseState(self.x, self.y, -self.px, -self.py)


@dataclass(frozen=True)
class CriticalPoint:
    """Equilibrium of the potential with its Morse index (0 minimum, 1 saddle)."""

    position: tuple[float, float]
    value: float
    index: int


def potential(q, p: SystemParams) -> float:
    """Potential energy at position ``q = (x, y)``."""
    x, y = q
    u = p.lam * x
    u2 = u * u
    y2 = y * y
    return p.c1 * (u2 + y2) + p.c2 * y - p.c3 * (u2 * u2 + y2 * y2 - 6.0 * u2 * y2)


def grad_potential(q, p: SystemParams) -> np.ndarray:
    """Analytic gradient (dV/dx, dV/dy) at ``q``."""
    x, y = q
    u = p.lam * x
    gu = 2.0 * p.c1 * u - p.c3 * (4.0 * u * u * u - 12.0 * u * y * y)
    gy = 2.0 * p.c1 * y + p.c2 - p.c3 * (4.0 * y * y * y - 12.0 * u * u * y)
    return np.array([p.lam * gu, gy])


def hessian_potential(q, p: SystemParams) -> np.ndarray:
    """Analytic Hessian of V at ``q``."""
    x, y = q
    u = p.lam * x
    vuu = 2.0 * p.c1 - p.c3 * (12.0 * u * u - 12.0 * y * y)
    vuy = 24.0 * p.c3 * u * y
    vyy = 2.0 * p.c1 - p.c3 * (12.0 * y * y - 12.0 * u * u)
    lam = p.lam
    return np.array([[lam * lam * vuu, lam * vuy], [lam * vuy, vyy]])


def hamiltonian(s: PhaseState, p: SystemParams) -> float:
    """Total energy px^2/2 + py^2/2 + V(x, y)."""
    return 0.5 * (s.px * s.px + s.py * s.py) + potential((s.x, s.y), p)


def eom_rhs(s: PhaseState, p: SystemParams) -> np.ndarray:
    """Hamilton's equations: (xdot, ydot, pxdot, pydot)."""
    g = grad_potential((s.x, s.y), p)
    return np.array([s.px, s.py, -g[0], -g[1]])


def eom_jacobian(s: PhaseState, p: SystemParams) -> np.ndarray:
    """Jacobian of the vector field, used by the variational equations."""
    h = hessian_potential((s.x, s.y), p)
    jac = np.zeros((4, 4))
    jac[0, 2] = 1.0
    jac[1, 3] = 1.0
    jac[2:, :2] = -h
    return jac


def variational_rhs(s: PhaseState, phi: np.ndarray, p: SystemParams):
    """Time derivative of (state, state-transition matrix): (eom_rhs, J @ phi)."""
    return eom_rhs(s, p), eom_jacobian(s, p) @ np.asarray(phi, dtype=float)


def _newton_critical(q0, p: SystemParams, max_iter=60, tol=1e-13):
    q = np.asarray(q0, dtype=float)
    for _ in range(max_iter):
        g = grad_potential(q, p)
        if np.linalg.norm(g) < tol:
            return q
        h = hessian_potential(q, p)
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            return None
        q = q - step
        if not np.all(np.isfinite(q)):
            return None
    g = grad_potential(q, p)
    return q if np.linalg.norm(g) < 1e-10 else None


def find_critical_points(p: SystemParams) -> list[CriticalPoint]:
    """Locate all five critical points of the caldera family.

    Newton iteration on grad V = 0, seeded from a 20x20 grid over the scaled
    box u = lam*x in [-2.5, 2.5], y in [-2.5, 2.5].  The box is lam-invariant
    in u, so the same seeds work for every stretching.  Raises
    :class:`CriticalPointSearchFailed` if fewer than five distinct points
    converge.
    """
    seeds_u = np.linspace(-2.5, 2.5, 20)
    seeds_y = np.linspace(-2.5, 2.5, 20)
    found: list[np.ndarray] = []
    for su in seeds_u:
        for sy in seeds_y:
            q = _newton_critical((su / p.lam, sy), p)
            if q is None:
                continue
            # merge duplicates in the scaled coordinate u = lam*x
            key = np.array([p.lam * q[0], q[1]])
            if any(np.linalg.norm(key - np.array([p.lam * f[0], f[1]])) < 1e-6 for f in found):
                continue
            found.append(q)
    points = []
    for q in found:
        eigs = np.linalg.eigvalsh(hessian_potential(q, p))
        if np.any(np.abs(eigs) < 1e-8):
            continue  # degenerate, not part of the caldera family
        index = int(np.sum(eigs < 0.0))
        if index > 1:
            continue  # maxima are not expected and not reported
        points.append(
            CriticalPoint(
                position=(float(q[0]), float(q[1])),
                value=float(potential(q, p)),
                index=index,
            )
        )
    if len(points) < 5:
        raise CriticalPointSearchFailed(
            f"expected 5 critical points, converged to {len(points)}"
        )
    points.sort(key=lambda cp: (cp.position[1], cp.position[0]))
    return points
