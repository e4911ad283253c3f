"""Equilibria, stability regions and branch continuation for a planar tensegrity mechanism."""

from .mechanism import (
    Configuration,
    Equilibrium,
    MechanismParams,
    StabilityClass,
    Tolerances,
    classify_stability,
    gradient,
    hessian,
    potential_energy,
    spring_lengths,
)
from .polysolve import (
    BivariatePoly,
    DegenerateResultant,
    NoConsistentRoot,
    UnivariatePoly,
    ZeroPolynomial,
    back_substitute,
    eliminate,
    halfangle_system,
    real_roots,
    solve_equilibria,
)
from .special_cases import (
    SymmetricInstance,
    UnloadedInstance,
    solve_symmetric,
    solve_unloaded,
    symmetric_boundary_residual,
)
from .regions import PlaneSpec, RegionMap, count_stable, map_region, validate_boundaries
from .continuation import Branch, EventKind, classify_endpoint, trace_branches

__all__ = [
    "Branch",
    "BivariatePoly",
    "Configuration",
    "DegenerateResultant",
    "Equilibrium",
    "EventKind",
    "MechanismParams",
    "NoConsistentRoot",
    "PlaneSpec",
    "RegionMap",
    "StabilityClass",
    "SymmetricInstance",
    "Tolerances",
    "UnivariatePoly",
    "UnloadedInstance",
    "ZeroPolynomial",
    "back_substitute",
    "classify_endpoint",
    "classify_stability",
    "count_stable",
    "eliminate",
    "gradient",
    "halfangle_system",
    "hessian",
    "map_region",
    "potential_energy",
    "real_roots",
    "solve_equilibria",
    "solve_symmetric",
    "solve_unloaded",
    "spring_lengths",
    "symmetric_boundary_residual",
    "trace_branches",
    "validate_boundaries",
]
