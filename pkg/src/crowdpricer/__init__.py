"""Pricing tools for batch crowdsourcing.

Given a market description (worker arrival profile plus a price-acceptance
curve), the package computes dynamic posted-price policies that finish a
batch by a deadline at minimal expected cost, static allocations of a fixed
budget that minimize completion time, and cost/delay tradeoff prices without
a deadline.  Monte Carlo simulators, a fixed-price baseline, and estimators
for fitting the market description from observed data round it out.
"""

__version__ = "0.1.0"

from .budget import (
    BudgetProblem,
    StaticAllocation,
    expected_latency,
    expected_worker_arrivals,
    lower_convex_hull,
    solve_static_exact,
    solve_static_lp,
)
from .deadline import (
    DeadlinePolicy,
    DeadlineProblem,
    PolicyEvaluation,
    calibrate_penalty,
    evaluate_policy_exact,
    policy_from_dict,
    policy_to_dict,
    problem_digest,
    problem_from_dict,
    problem_to_dict,
    solve_efficient,
    solve_simple,
    transition_distribution,
)
from .errors import (
    CapacityError,
    CrowdPricerError,
    DataError,
    InfeasibleError,
    LowRatePremiseWarning,
)
from .estimation import (
    DerivedModel,
    FitResult,
    TaskGroupObservation,
    derive_acceptance_model,
    fit_periodic_profile,
    fit_wage_utility,
    load_arrival_csv,
    load_observations_csv,
    write_arrival_csv,
)
from .market import (
    AcceptanceModel,
    ArrivalProfile,
    LogisticAcceptance,
    PriceGrid,
    TabulatedAcceptance,
    poisson_pmf,
    poisson_tail,
    truncation_threshold,
)
from .simulate import (
    Aggregates,
    FixedPrice,
    SimulationConfig,
    SimulationReport,
    TrialOutcome,
    baseline_fixed_price,
    completion_probability_fixed,
    constant_price_policy,
    cost_reduction,
    evaluate_fixed_price,
    price_floor_c0,
    simulate_budget,
    simulate_choice_model,
    simulate_deadline,
)
from .tradeoff import (
    ArrivalBasedMarket,
    FixedRateMarket,
    TradeoffProblem,
    TradeoffSolution,
    solve_tradeoff,
)

__all__ = [
    "__version__",
    "AcceptanceModel",
    "Aggregates",
    "ArrivalBasedMarket",
    "ArrivalProfile",
    "BudgetProblem",
    "CapacityError",
    "CrowdPricerError",
    "DataError",
    "DeadlinePolicy",
    "DeadlineProblem",
    "DerivedModel",
    "FitResult",
    "FixedPrice",
    "FixedRateMarket",
    "InfeasibleError",
    "LogisticAcceptance",
    "LowRatePremiseWarning",
    "PolicyEvaluation",
    "PriceGrid",
    "SimulationConfig",
    "SimulationReport",
    "StaticAllocation",
    "TabulatedAcceptance",
    "TaskGroupObservation",
    "TradeoffProblem",
    "TradeoffSolution",
    "TrialOutcome",
    "baseline_fixed_price",
    "calibrate_penalty",
    "completion_probability_fixed",
    "constant_price_policy",
    "cost_reduction",
    "derive_acceptance_model",
    "evaluate_fixed_price",
    "evaluate_policy_exact",
    "expected_latency",
    "expected_worker_arrivals",
    "fit_periodic_profile",
    "fit_wage_utility",
    "load_arrival_csv",
    "load_observations_csv",
    "lower_convex_hull",
    "poisson_pmf",
    "poisson_tail",
    "policy_from_dict",
    "policy_to_dict",
    "price_floor_c0",
    "problem_digest",
    "problem_from_dict",
    "problem_to_dict",
    "simulate_budget",
    "simulate_choice_model",
    "simulate_deadline",
    "solve_efficient",
    "solve_simple",
    "solve_static_exact",
    "solve_static_lp",
    "solve_tradeoff",
    "transition_distribution",
    "truncation_threshold",
    "write_arrival_csv",
]
