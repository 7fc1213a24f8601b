"""Grand-canonical entropy minimisation on bounded domains via convex duality."""
from .domain import BoxDomain, MacroState, ThermoParams
from .dual import DualSolution, dual_objective, ideal_gas_closed_form, minimality_gap, solve_dual
from .errors import (
    BudgetError,
    ConfigError,
    DivergenceError,
    DomainError,
    EmptyDomainError,
    ExtrapolationError,
    GcdualError,
    InfeasibleError,
    RegionError,
    TruncationWarning,
)
from .feasible import (
    FeasibilityVerdict,
    SlabDescription,
    generator_points,
    membership,
    rough_bound_check,
    slab,
    witness_holds,
)
from .legendre import (
    GridFunction,
    biconjugate,
    boundary_limit,
    conjugacy_tolerance,
    gaps_decreasing,
    lft,
    lft_direct,
    uniform_gap,
)
from .partition import (
    PartitionEstimate,
    PartitionModel,
    config_integral,
    gc_sample,
    get_model,
    hessian,
    log_partition,
    moments,
)
from .potentials import (
    CATALOG,
    PairPotential,
    analyticity_bound,
    from_config,
    hard_spheres,
    ideal_gas,
    in_region,
    lennard_jones,
    mayer_integral,
    per_n_stability,
    square_well,
)
from .thermo_limit import (
    BoxSequence,
    ConvergenceRecord,
    HomeomorphismReport,
    box_sequence,
    domain_estimate,
    entropy_limit,
    homeomorphism_check,
    parameter_convergence,
    pressure_estimate,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
