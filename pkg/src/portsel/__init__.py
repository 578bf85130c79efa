"""Local-search solvers for constrained mean-variance portfolio selection."""

from .errors import (
    IncompleteMatrixError,
    InfeasibleError,
    InfeasibleRepairError,
    MetricError,
    MoveRejectedError,
    ParseError,
    PortselError,
    ValidationError,
)
from .instance import (
    Instance,
    TargetReturn,
    UefReference,
    load_instance,
    load_uef,
    parse_instance,
    parse_uef,
    return_grid,
    serialize_instance,
    validate_target_return,
)
from .portfolio import (
    CostBreakdown,
    PenaltyState,
    Portfolio,
    best_of_random,
    check_portfolio,
    delta_evaluate,
    evaluate,
    portfolio_return,
    random_portfolio,
    renormalize,
    update_penalty,
)
from .neighborhood import (
    Arrow,
    IdidMove,
    IdrMove,
    Move,
    Relation,
    StepPolicy,
    TidMove,
    apply_move,
    draw_step,
    enumerate_moves,
    is_inverse,
    random_move,
)
from .engine import (
    RunnerConfig,
    RunResult,
    TabuList,
    Technique,
    is_tabu,
    run,
    run_hill_climbing,
    run_simulated_annealing,
    run_tabu,
)
from .tokenring import TokenRing, run_token_ring
from .frontier import (
    FrontierPoint,
    SensitivityRow,
    SingleRunner,
    SolverSpec,
    SweepConfig,
    avg_percent_loss,
    merge_acef,
    sensitivity_study,
    solve_one,
    sweep,
)

__version__ = "0.1.0"
