"""netalloc: saddle-point solvers for resource allocation over networks.

The package couples a regularized primal-dual iteration whose primal step
is premixed by a graph-structured weight matrix (so every iterate satisfies
the resource-allocation equality), step-size certification with explicit
contraction rates, approximation-quality bounds for the regularized
solution, an equivalent synchronous message-passing execution mode, and a
robot barycenter-tracking demo application.
"""

from .errors import (
    BarrierBreakdown,
    DimensionMismatch,
    DisconnectedGraph,
    InfeasibleStart,
    InvalidEdge,
    MissingMatrix,
    MissingMessage,
    NetAllocError,
    NoConvergence,
    NoFeasibleBeta,
    OutsideBall,
    ScheduleMismatch,
    TooLarge,
    WeightPropertyError,
)
from .graphs import (
    Graph,
    SpectralSummary,
    ValidationReport,
    WeightMatrix,
    build_graph,
    design_weights,
    graph_from_json,
    graph_to_json,
    laplacian,
    make_weight_matrix,
    spectral_summary,
    validate_weight_matrix,
)
from .problem import (
    BallCap,
    BarrierConfig,
    DistanceCap,
    EdgeFunctionPair,
    FunctionPair,
    LinearEdge,
    LinearNode,
    ProblemInstance,
    Quadratic,
    StackedPoint,
    barrier_grad_x,
    barrier_lagrangian,
    eval_constraints,
    eval_cost,
    feasibility_residual,
    grad_mu,
    grad_x,
    quadratic_problem_from_json,
    reg_lagrangian,
    uniform_start,
)
from .solver import (
    Certificate,
    EmpiricalConstants,
    LipschitzEstimate,
    StepSizes,
    Trace,
    certify,
    dual_step,
    empirical_constants,
    estimate_lipschitz,
    max_beta_nonsymmetric,
    primal_step,
    run,
    suboptimality_bound,
    violation_bound,
)
from .distributed import (
    EquivalenceReport,
    MessageStats,
    NodeProgram,
    RoundMessage,
    equivalence_check,
    partition,
    reassemble,
    run_network,
    run_round,
)
from .oracle import (
    KKTResidual,
    OracleSolution,
    consensus_projector,
    finite_diff_check,
    grid_minimum,
    kkt_residual,
    solve_original_small,
    solve_regularized_centralized,
)
from .tracking import (
    Scenario,
    TrajectoryLog,
    default_scenario,
    demo_graph,
    export_log,
    load_trajectory_json,
    run_tracking,
    step_problem,
    synthetic_path,
    warm_start,
)

__version__ = "0.1.0"
