"""collapsar: numerical laboratory for self-similar gravitational collapse.

Integrates the reduced similarity system of an isothermal (or pressureless)
self-gravitating radial flow with density-dependent viscosity, verifies the
qualitative theory along traces, models the shadow-wave core at the origin
with its weak-residual scalings, compares against the inviscid sonic-point
system, and cross-validates self-similarity by evolving the radial PDE in
similarity coordinates.
"""

from .checks import (
    CheckReport,
    check_H_negative,
    check_R_monotone,
    check_W_below_minus_one_until_yd,
    check_W_bound,
    check_asymptotics,
    check_decay_bound,
    check_gap,
    run_suite,
    suite_passed,
)
from .engine import IntegratorConfig, fixed_step_rk4, integrate, residual
from .errors import (
    BadStep,
    CflViolation,
    CollapsarError,
    ConfigError,
    InsufficientTail,
    NonFinite,
    OutOfRange,
    SingularEvaluation,
    SonicSingular,
)
from .inviscid import (
    InviscidState,
    InviscidTrace,
    SonicClass,
    SonicReport,
    integrate_inviscid,
    rhs_inviscid,
)
from .pde import PdeConfig, RadialField, deviation, evolve, init_from_trace, step
from .shadow import (
    CoreState,
    ScalingFit,
    SweepAborted,
    WeakProbe,
    admissibility_scaling,
    core_mass,
    inviscid_admissibility,
    inviscid_admissibility_sweep,
    mass_residual,
    momentum_residual,
    smooth_bump,
    solve_alpha,
    sweep_rows,
    weighted_mass_residual,
)
from .similarity import (
    BREAKDOWN_THRESHOLD,
    ISOTHERMAL,
    VANISHING,
    DerivativeTriple,
    EventKind,
    EventRecord,
    PhysicalInit,
    PressureFlag,
    SimilarityState,
    SolutionTrace,
    Termination,
    H,
    gravity_quadrature,
    gravity_similarity,
    map_initial,
    reconstruct,
    rhs,
)

__version__ = "0.1.0"
