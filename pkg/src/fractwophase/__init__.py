"""Two-phase obstacle-type problems for the fractional p-Laplacian.

Spectral realization of the Riesz fractional gradient on padded periodic
grids, regularized energy minimization with continuation, stability studies
in the order s and in the level set, and a fixed-point driver for the
implicit (quasi-variational) problem.
"""

__version__ = "0.1.0"

from .energy import (
    ProblemData,
    RegularizationParams,
    energy,
    energy_regularized,
    first_variation,
    smoothed_heaviside,
    smoothed_positive_part,
    sobolev_exponents,
    zeta_from_state,
)
from .errors import (
    AprioriBoundViolationError,
    ConfigParseError,
    DegenerateFitError,
    FieldReadError,
    FixedPointNonConvergenceError,
    FracTwoPhaseError,
    GridMismatchError,
    InterphaseNotNegligibleError,
    InvalidExponentError,
    InvalidOrderError,
    NonConvergenceError,
    OracleSizeError,
    ReportWriteError,
    ValidationError,
)
from .fractional import (
    FractionalOrder,
    SpectralPlan,
    fractional_p_laplacian_apply,
    monotonicity_gap,
    plan_for,
    riesz_divergence,
    riesz_gradient,
)
from .grid import (
    Ball,
    Box2D,
    BoxGrid,
    GridFunction,
    Interval,
    OmegaMask,
    VectorField,
    compact_bump,
    const_field,
    enforce_zero_extension,
    from_callable,
    gaussian_bump,
    grid_function,
    integrate,
    linear_ramp,
    lp_norm,
    make_grid,
    sine_mode,
    vector_field,
    vector_lp_norm,
)
from .io import read_field, read_report, write_field, write_report
from .limits import (
    SweepReport,
    VPerturbationReport,
    battery_bumps,
    characteristic_convergence_check,
    s_sweep,
    v_perturbation_study,
)
from .oracle import dense_oracle_gradient
from .qvi import (
    AffineReflectionPhi,
    CoupledMembranePhi,
    FixedPointConfig,
    NemytskiiPhi,
    PhiOperator,
    UrysonPhi,
    apply_phi,
    qvi_s_sweep,
    solve_qvi,
    truncate,
)
from .solver import (
    MembraneSolution,
    RateReport,
    Solution,
    SolverConfig,
    check_nondegeneracy,
    epsilon_rate_study,
    measure_interphase,
    solve_regularized,
    solve_two_membrane,
    solve_two_phase,
)
from .config import RunConfig, parse_config
