"""Origin-fate maps and phase-space transport for the stretched caldera Hamiltonian."""

from .classify import CofmScheme, DM_BDM_SCHEME, OriginFateIndex, classify_point, cofm_label
from .dynamics import (
    CriticalPoint,
    PhaseState,
    SystemParams,
    eom_rhs,
    find_critical_points,
    grad_potential,
    hamiltonian,
    hessian_potential,
    potential,
    variational_rhs,
)
from .integrate import (
    EscapeEvent,
    IntegrationSettings,
    SectionCrossing,
    TrajectoryOutcome,
    escape_event,
    integrate_to_time,
    integrate_until,
)
from .ld import LdField, extract_ridges, ld_field
from .pods import (
    BranchingRecord,
    PodsSpec,
    branching_fraction,
    build_pods_points,
    compute_ofm_pods,
    find_critical_lambda,
    sweep_lambda,
)
from .render import Palette, render_ofm, write_ppm
from .section import OFMGrid, SectionSpec, allowed_window, compute_ofm, index_fractions, solve_py
from .upo import (
    CornerNode,
    UPOrbit,
    continue_upo,
    hunt_corner_node,
    load_upo,
    poincare_map,
    refine_upo,
    save_upo,
    scan_corner_nodes,
)

__version__ = "0.1.0"

__all__ = [
    "BranchingRecord",
    "CofmScheme",
    "CornerNode",
    "CriticalPoint",
    "DM_BDM_SCHEME",
    "EscapeEvent",
    "IntegrationSettings",
    "LdField",
    "OFMGrid",
    "OriginFateIndex",
    "Palette",
    "PhaseState",
    "PodsSpec",
    "SectionCrossing",
    "SectionSpec",
    "SystemParams",
    "TrajectoryOutcome",
    "UPOrbit",
    "allowed_window",
    "branching_fraction",
    "build_pods_points",
    "classify_point",
    "cofm_label",
    "compute_ofm",
    "compute_ofm_pods",
    "continue_upo",
    "eom_rhs",
    "escape_event",
    "extract_ridges",
    "find_critical_lambda",
    "find_critical_points",
    "grad_potential",
    "hamiltonian",
    "hessian_potential",
    "hunt_corner_node",
    "index_fractions",
    "integrate_to_time",
    "integrate_until",
    "ld_field",
    "load_upo",
    "poincare_map",
    "potential",
    "refine_upo",
    "render_ofm",
    "save_upo",
    "scan_corner_nodes",
    "solve_py",
    "sweep_lambda",
    "variational_rhs",
    "write_ppm",
]
