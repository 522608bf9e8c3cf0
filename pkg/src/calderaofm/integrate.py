"""Trajectory integration with escape detection and section-crossing events.

Wraps the compiled Dormand-Prince kernel.  Backward integration negates the
momenta, integrates the same forward code path and negates again, so forward
and backward runs are exactly time-reversal images of each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as k
from .dynamics import PhaseState, SystemParams, hamiltonian
from .errors import EnergyDriftExceeded, OffShellInitialCondition, StepSizeUnderflow

DEFAULT_ESCAPE_RADIUS = 5.0
SHELL_TOL = 1e-9


@dataclass(frozen=True)
class IntegrationSettings:
    """Tolerances and cutoffs for a single trajectory leg."""

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_time: float = 20.0
    event_time_tol: float = 1e-12
    energy_drift_tol: float = 1e-8
    escape_radius: float = DEFAULT_ESCAPE_RADIUS

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_time", "event_time_tol", "energy_drift_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class EscapeEvent:
    """Trigger when the scaled radius sqrt(u^2 + y^2), u = lam*x, exceeds radius outward."""

    radius: float = DEFAULT_ESCAPE_RADIUS


@dataclass(frozen=True)
class SectionCrossing:
    """Trigger at the first crossing of y = value with the momentum sign py_sign."""

    value: float
    py_sign: int = 1
    section_id: int = 0


@dataclass(frozen=True)
class Termination:
    kind: str  # "escaped" | "timed_out" | "event"
    channel: int = 0
    section_id: int = -1


@dataclass
class TrajectoryOutcome:
    terminal_state: PhaseState
    terminal_time: float
    termination: Termination
    energy_drift: float
    samples: tuple[np.ndarray, np.ndarray] | None = field(default=None)

    @property
    def escaped(self) -> bool:
        return self.termination.kind == "escaped"

    @property
    def channel(self) -> int:
        return self.termination.channel


def escape_event(s: PhaseState, p: SystemParams, radius: float = DEFAULT_ESCAPE_RADIUS) -> float:
    """Signed escape indicator R^2 - (u^2 + y^2); negative outside the radius."""
    u = p.lam * s.x
    return radius * radius - (u * u + s.y * s.y)


def check_on_shell(s: PhaseState, p: SystemParams, tol: float = SHELL_TOL) -> None:
    err = abs(hamiltonian(s, p) - p.energy) / max(1.0, abs(p.energy))
    if err > tol:
        raise OffShellInitialCondition(
            f"|H - E|/max(1,|E|) = {err:.3e} exceeds {tol:.1e}"
        )


def integrate_until(
    s0: PhaseState,
    direction: str = "forward",
    events=(EscapeEvent(),),
    settings: IntegrationSettings = IntegrationSettings(),
    p: SystemParams = SystemParams(),
    check_shell: bool = True,
    n_samples: int | None = None,
) -> TrajectoryOutcome:
    """Integrate until the first event, escape or |t| = max_time.

    ``events`` is a sequence of :class:`EscapeEvent` / :class:`SectionCrossing`
    declarations; at most one of each kind is supported.  With
    ``n_samples`` set, the outcome carries (times, states) sampled uniformly
    over the integrated span for plotting.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    if check_shell:
        check_on_shell(s0, p)

    r_esc = 0.0
    plane_value = 0.0
    plane_dir = 0.0
    section_id = -1
    for ev in events:
        if isinstance(ev, EscapeEvent):
            r_esc = float(ev.radius)
        elif isinstance(ev, SectionCrossing):
            plane_value = float(ev.value)
            plane_dir = float(np.sign(ev.py_sign))
            section_id = int(ev.section_id)
        else:
            raise TypeError(f"unsupported event {ev!r}")

    backward = direction == "backward"
    y0 = s0.as_array()
    if backward:
        y0[2] = -y0[2]
        y0[3] = -y0[3]
        # a py_sign filter refers to the physical momentum, so flip it for
        # the reversed leg
        plane_dir = -plane_dir

    if n_samples:
        ts = np.linspace(0.0, settings.max_time, int(n_samples))
        ys = np.empty((len(ts), 4))
    else:
        ts = k._EMPTY_TS
        ys = k._EMPTY_YS

    status, channel, t_end, y_end, drift, nfill, _ = k._propagate(
        y0,
        settings.max_time,
        settings.rel_tol,
        settings.abs_tol,
        p.c1,
        p.c2,
        p.c3,
        p.lam,
        settings.energy_drift_tol,
        r_esc,
        plane_value,
        plane_dir,
        settings.event_time_tol,
        0.0,
        ts,
        ys,
    )

    if status == k.STATUS_UNDERFLOW:
        raise StepSizeUnderflow(f"step size underflow at t = {t_end:.6g}")
    if status == k.STATUS_DRIFT:
        raise EnergyDriftExceeded(
            f"relative energy drift {drift:.3e} exceeds {settings.energy_drift_tol:.1e}"
        )

    y_end = y_end.copy()
    sign = -1.0 if backward else 1.0
    if backward:
        y_end[2] = -y_end[2]
        y_end[3] = -y_end[3]

    if status == k.STATUS_ESCAPED:
        term = Termination("escaped", channel=int(channel))
    elif status == k.STATUS_PLANE:
        term = Termination("event", section_id=section_id)
    else:
        term = Termination("timed_out")

    samples = None
    if n_samples:
        tt = sign * ts[:nfill]
        yy = ys[:nfill].copy()
        if backward:
            yy[:, 2] = -yy[:, 2]
            yy[:, 3] = -yy[:, 3]
        samples = (tt, yy)

    return TrajectoryOutcome(
        terminal_state=PhaseState.from_array(y_end),
        terminal_time=sign * t_end,
        termination=term,
        energy_drift=float(drift),
        samples=samples,
    )


def integrate_to_time(
    s0: PhaseState,
    t_end: float,
    settings: IntegrationSettings = IntegrationSettings(),
    p: SystemParams = SystemParams(),
    n_samples: int | None = None,
):
    """Event-free integration to a fixed positive time (no escape cutoff)."""
    y0 = s0.as_array()
    if n_samples:
        ts = np.linspace(0.0, t_end, int(n_samples))
        ys = np.empty((len(ts), 4))
    else:
        ts = k._EMPTY_TS
        ys = k._EMPTY_YS
    status, _, t_fin, y_end, drift, nfill, _ = k._propagate(
        y0, float(t_end), settings.rel_tol, settings.abs_tol,
        p.c1, p.c2, p.c3, p.lam,
        math.inf, 0.0, 0.0, 0.0, settings.event_time_tol, 0.0, ts, ys,
    )
    if status == k.STATUS_UNDERFLOW:
        raise StepSizeUnderflow(f"step size underflow at t = {t_fin:.6g}")
    samples = (ts[:nfill], ys[:nfill].copy()) if n_samples else None
    return PhaseState.from_array(y_end), float(drift), samples
