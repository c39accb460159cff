"""Membrane-mediated particle interactions and free-energy sampling."""

from .geometry import (
    BoundaryProfile,
    Domain,
    EscapesDomain,
    GeometryError,
    Overlap,
    Particle,
    ParticleConfig,
    boundary_data,
    boundary_quadrature,
    make_configuration,
    min_separation,
    rigid_motion,
)
from .membrane import (
    Discretization,
    MembraneSolution,
    OutsideMembrane,
    PhysicsParams,
    SingularSystem,
    energy,
    evaluate_field,
    solve_membrane,
)
from .shape_gradient import (
    Direction,
    build_cutoff_field,
    build_pde_field,
    directional_derivative,
    fd_check,
    gradient,
)
from .potentials import (
    PotentialModel,
    SoftWallParams,
    direct_potential,
    full_potential,
    hamiltonian,
    lj_pair,
    wall_term,
)
from .langevin import (
    Checkpoint,
    FreeTarget,
    ParticleTarget,
    QuadraticTarget,
    SamplerParams,
    StuckState,
    Trajectory,
    em_step,
    iterate_chain,
    run_chain,
    underdamped_step,
)
from .free_energy import (
    PROTOCOLS,
    DegenerateEstimate,
    FepResult,
    PerturbationProtocol,
    TooFewBlocks,
    block_variance,
    fed_curve,
    get_protocol,
    shift_protocol,
    zwanzig_estimate,
    zwanzig_observable,
)

__version__ = "0.1.0"

__all__ = [
    "block_variance",
    "boundary_data",
    "boundary_quadrature",
    "BoundaryProfile",
    "build_cutoff_field",
    "build_pde_field",
    "Checkpoint",
    "DegenerateEstimate",
    "direct_potential",
    "Direction",
    "directional_derivative",
    "Discretization",
    "Domain",
    "em_step",
    "energy",
    "EscapesDomain",
    "evaluate_field",
    "fd_check",
    "fed_curve",
    "FepResult",
    "FreeTarget",
    "full_potential",
    "GeometryError",
    "get_protocol",
    "gradient",
    "hamiltonian",
    "iterate_chain",
    "lj_pair",
    "make_configuration",
    "MembraneSolution",
    "min_separation",
    "OutsideMembrane",
    "Overlap",
    "Particle",
    "ParticleConfig",
    "ParticleTarget",
    "PerturbationProtocol",
    "PhysicsParams",
    "PotentialModel",
    "PROTOCOLS",
    "QuadraticTarget",
    "rigid_motion",
    "run_chain",
    "SamplerParams",
    "shift_protocol",
    "SingularSystem",
    "SoftWallParams",
    "solve_membrane",
    "StuckState",
    "TooFewBlocks",
    "Trajectory",
    "underdamped_step",
    "wall_term",
    "zwanzig_estimate",
    "zwanzig_observable",
]
