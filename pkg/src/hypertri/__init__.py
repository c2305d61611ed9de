"""Triangularisation of matrix symbols and a cascade solver for
first-order hyperbolic systems with upper-triangular principal part,
discretized spectrally on the one-dimensional torus."""

from .errors import (
    AliasingWarning,
    BadEigenpair,
    ConditionFailure,
    ContinuationError,
    DegenerateData,
    DimensionError,
    EvaluationError,
    HypertriError,
    HypothesisFailure,
    InstabilityError,
    MultiplicityWarning,
    NotContractive,
    NotXIndependent,
    ParseError,
    ScenarioError,
    SolveFailure,
)
from .symbols import (
    GridSpec,
    MatrixSymbol,
    ScalarSymbol,
    VANISHING_ORDER,
    bracket,
    constant,
    estimate_order,
    eval_grid,
    from_function,
    matsym_apply_pointwise,
    x_function,
    xi_symbol,
    zero_symbol,
)
from .pdo import (
    Field,
    StateVector,
    apply_symbol,
    frequency_cutoff,
    sobolev_norm,
)
from .propagators import (
    Phase,
    PropagatorConfig,
    explicit_phase,
    fio_apply,
    measure_small_time_bounds,
    solve_homogeneous,
    solve_inhomogeneous,
)
from .schur import (
    EigenData,
    TriangularResult,
    VerificationReport,
    check_condition,
    full_triangularise,
    numeric_eigendata,
    reduced_eigenvector,
    schur_step,
    verify_triangular,
)
from .cascade import (
    CascadeSolution,
    GrowthReport,
    SystemSpec,
    check_hypotheses,
    component_rhs,
    demo_loss_of_regularity,
    neumann_invert,
    solve_cascade,
    solve_reference,
)
from .diagnostics import (
    ConvergenceReport,
    GrowthFit,
    fit_exponential_bound,
    refinement_study,
)

__version__ = "0.1.0"
