"""Performance-based resource pricing.

Two fair pricing schemes over a discrete demand model, the water-level
scheme (tabulated, risk-free, deviation-minimal for every exponent > 1) and
the non-negative linear scheme (affine in demand, variance-minimal), plus
independent oracles that certify optimality and incentive properties, and a
seeded Monte Carlo simulator for ruin analysis.
"""

from .errors import (
    DimensionMismatch,
    EmptyHistory,
    FairnessUnreachable,
    InconsistentDuplicate,
    InfeasibleFairness,
    InvalidScenarioValue,
    NegativeMass,
    NonConvergence,
    NonNormalizedPmf,
    PricingEngineError,
    ScenarioParseError,
    TooLarge,
    ValidationError,
)
from .linear_pricing import (
    LinearPriceFunction,
    build_ls_problem,
    fairness_residual,
    linear_pricing,
)
from .nnls import LsProblem, NnlsSolution, kkt_residual, nnls_solve
from .oracle import (
    LinearOracleResult,
    SimulationConfig,
    SimulationReport,
    SteadyOracleResult,
    brute_force_linear,
    brute_force_steady,
    check_incentive,
    fair_pairwise_perturbations,
    sample_misreports,
    simulate_profits,
)
from .scenario import (
    EmpiricalPmf,
    PricingReport,
    ScenarioTable,
    estimate_pmf,
    expected_starting_price,
    is_fair,
    is_nonnegative,
    load_history_csv,
    load_scenario_csv,
    load_scenario_file,
    load_scenario_json,
    profit_stats,
    validate_table,
)
from .waterfill import (
    TabulatedPriceFunction,
    solve_level,
    threshold_revenue,
    waterlevel_pricing,
)

__version__ = "0.1.0"

__all__ = [
    "DimensionMismatch",
    "EmptyHistory",
    "EmpiricalPmf",
    "FairnessUnreachable",
    "InconsistentDuplicate",
    "InfeasibleFairness",
    "InvalidScenarioValue",
    "LinearOracleResult",
    "LinearPriceFunction",
    "LsProblem",
    "NegativeMass",
    "NnlsSolution",
    "NonConvergence",
    "NonNormalizedPmf",
    "PricingEngineError",
    "PricingReport",
    "ScenarioParseError",
    "ScenarioTable",
    "SimulationConfig",
    "SimulationReport",
    "SteadyOracleResult",
    "TabulatedPriceFunction",
    "TooLarge",
    "ValidationError",
    "brute_force_linear",
    "brute_force_steady",
    "build_ls_problem",
    "check_incentive",
    "estimate_pmf",
    "expected_starting_price",
    "fair_pairwise_perturbations",
    "fairness_residual",
    "is_fair",
    "is_nonnegative",
    "kkt_residual",
    "linear_pricing",
    "load_history_csv",
    "load_scenario_csv",
    "load_scenario_file",
    "load_scenario_json",
    "nnls_solve",
    "profit_stats",
    "sample_misreports",
    "simulate_profits",
    "solve_level",
    "threshold_revenue",
    "validate_table",
    "waterlevel_pricing",
]
