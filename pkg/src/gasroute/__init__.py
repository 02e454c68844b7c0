"""Gas-aware trade routing across constant-function markets."""

from .analysis import (
    ConeDiagnostic,
    EpsilonBound,
    EpsilonReport,
    NoTradeCertificate,
    cone_diagnostic,
    epsilon_bound,
    min_gas_for_no_trade,
    no_trade_certificates,
    no_trade_membership,
    verify_epsilon,
)
from .examples import BUILTIN_EXAMPLES, example1_gm, example1_qm, example2
from .model import (
    FeasibilityReport,
    InstanceParseError,
    LinearUtility,
    Market,
    RoutingInstance,
    TradePlan,
    default_bounds,
    feasibility_report,
    instance_from_dict,
    instance_to_dict,
    net_output,
    objective_integer,
    objective_relaxed,
)
from .optimality import (
    KktReport,
    MarketConditions,
    check_cq,
    check_support,
    recover_multipliers,
    verify_kkt,
)
from .solver import (
    CONVERGED,
    INFEASIBLE,
    MAX_ITERATIONS,
    SolveOptions,
    SolveResult,
    round_activation,
    solve_exact_enumeration,
    solve_fixed_activation,
    solve_relaxed,
)
from .sweeps import (
    CompareRow,
    SweepAxis,
    SweepParseError,
    SweepSpec,
    evaluate_compare_point,
    evaluate_point,
    grid_points,
    run_compare,
    run_sweep,
    sweep_from_dict,
    write_compare_csv,
    write_csv,
)
from .tradefn import TradeFunction, lambert_w0

__all__ = [
    "BUILTIN_EXAMPLES",
    "CONVERGED",
    "ConeDiagnostic",
    "EpsilonBound",
    "EpsilonReport",
    "FeasibilityReport",
    "INFEASIBLE",
    "InstanceParseError",
    "KktReport",
    "LinearUtility",
    "MAX_ITERATIONS",
    "Market",
    "MarketConditions",
    "NoTradeCertificate",
    "RoutingInstance",
    "SolveOptions",
    "SolveResult",
    "SweepAxis",
    "SweepParseError",
    "SweepSpec",
    "TradeFunction",
    "TradePlan",
    "check_cq",
    "check_support",
    "cone_diagnostic",
    "default_bounds",
    "epsilon_bound",
    "evaluate_point",
    "example1_gm",
    "example1_qm",
    "example2",
    "feasibility_report",
    "grid_points",
    "instance_from_dict",
    "instance_to_dict",
    "lambert_w0",
    "min_gas_for_no_trade",
    "net_output",
    "no_trade_certificates",
    "no_trade_membership",
    "objective_integer",
    "objective_relaxed",
    "recover_multipliers",
    "round_activation",
    "run_sweep",
    "solve_exact_enumeration",
    "solve_fixed_activation",
    "solve_relaxed",
    "sweep_from_dict",
    "verify_epsilon",
    "verify_kkt",
    "write_csv",
]
