"""Origin-fate indexing of phase-space points.

The fate is the escape channel of the forward leg, the origin the escape
channel of the backward leg; 0 marks a leg still trapped at the cutoff time.
Both legs share one escape criterion, so time reversal exactly swaps the two
fields.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import _kernels as k
from .dynamics import PhaseState, SystemParams
from .errors import EnergyDriftExceeded, StepSizeUnderflow
from .integrate import IntegrationSettings, check_on_shell


@dataclass(frozen=True)
class OriginFateIndex:
    origin: int
    fate: int

    def __post_init__(self):
        if self.origin not in range(5) or self.fate not in range(5):
            raise ValueError(f"channels must be in 0..4, got {(self.origin, self.fate)}")

    def as_tuple(self) -> tuple[int, int]:
        return (self.origin, self.fate)

    @property
    def resolved(self) -> bool:
        return self.origin != 0 and self.fate != 0


@dataclass(frozen=True)
class CofmScheme:
    """Active origin-fate classes with display labels; everything else inactive."""

    active_classes: tuple[tuple[tuple[int, int], str], ...]
    inactive_label: str = "grey"

    def __post_init__(self):
        pairs = [pair for pair, _ in self.active_classes]
        if len(set(pairs)) != len(pairs):
            raise ValueError("active classes must be distinct")
        for origin, fate in pairs:
            if origin == 0 or fate == 0:
                raise ValueError("active classes may not contain channel 0")


# the four reactive classes of interest for dynamical matching studies
DM_BDM_SCHEME = CofmScheme(
    active_classes=(
        ((2, 4), "R-L DM"),
        ((1, 3), "L-R DM"),
        ((2, 3), "R-R BDM"),
        ((1, 4), "L-L BDM"),
    )
)


def classify_point(
    s0: PhaseState,
    settings: IntegrationSettings = IntegrationSettings(),
    p: SystemParams = SystemParams(),
    check_shell: bool = False,
) -> OriginFateIndex:
    """Origin-fate index of one point by bidirectional integration.

    ``check_shell`` is off by default: the index is well defined for any
    finite state (it classifies whatever shell the point actually lies on),
    and reference points quoted to a few decimals are often a little off the
    nominal energy.
    """
    if check_shell:
        check_on_shell(s0, p)
    origin, fate, st_f, st_b, drift = k._classify_one(
        s0.as_array(),
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
    )
    for st in (st_f, st_b):
        if st == k.STATUS_UNDERFLOW:
            raise StepSizeUnderflow("step size underflow during classification")
        if st == k.STATUS_DRIFT:
            raise EnergyDriftExceeded(
                f"relative energy drift {drift:.3e} exceeded the guard tolerance"
            )
    return OriginFateIndex(int(origin), int(fate))


def cofm_label(idx: OriginFateIndex, scheme: CofmScheme = DM_BDM_SCHEME) -> str:
    """Display label of an index under a classification scheme."""
    for pair, label in scheme.active_classes:
        if idx.as_tuple() == pair:
            return label
    return scheme.inactive_label
