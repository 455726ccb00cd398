"""State-contingent task allocation via markets.

Utilities are exponential in the task load; stochastic loads reduce to
deterministic equivalents; a tatonnement auction finds state-contingent
market-clearing prices; the resulting allocation is checked against
coalition blocking, ex-ante and in every realized state.
"""
from __future__ import annotations

__version__ = "0.1.0"

from . import arrivals
from .arrivals import ArrivalSpec
from .auction import AuctionConfig, EquilibriumReport, excess_demand, run_auction
from .baselines import (
    BaselineAllocation,
    SimulationResult,
    WelfareComparison,
    efficiency_share_table,
    equal_allocation,
    matching_assignment,
    random_allocation,
    simulate_realized_utilities,
    walrasian_allocation,
    weighted_matching_allocation,
    welfare_report,
)
from .ce import ce_exponential_load, ce_generic, mc_ce_oracle, mc_ce_with_stderr
from .coalitions import (
    SolverSettings,
    SscReport,
    all_coalitions,
    best_improvement,
    blocking_rows,
    check_ssc,
    coalition_endowment,
    coalition_mask,
    coalition_members,
    planner_allocation,
)
from .preferences import (
    DemandResult,
    Valuations,
    composite_share_utility,
    demand,
    expected_utility,
    state_utility,
    task_utility,
)
from .scenario import (
    BUILTIN_NAMES,
    Scenario,
    ScenarioError,
    builtin_scenario,
    endowment_shares,
    load_scenario,
    market_clearing_gap,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)
from .seeding import derive_seed, substream

__all__ = [
    "ArrivalSpec",
    "AuctionConfig",
    "BaselineAllocation",
    "DemandResult",
    "EquilibriumReport",
    "SimulationResult",
    "SolverSettings",
    "SscReport",
    "Valuations",
    "WelfareComparison",
    "all_coalitions",
    "best_improvement",
    "blocking_rows",
    "check_ssc",
    "coalition_endowment",
    "coalition_mask",
    "coalition_members",
    "composite_share_utility",
    "demand",
    "efficiency_share_table",
    "equal_allocation",
    "excess_demand",
    "expected_utility",
    "matching_assignment",
    "planner_allocation",
    "random_allocation",
    "run_auction",
    "simulate_realized_utilities",
    "state_utility",
    "task_utility",
    "walrasian_allocation",
    "weighted_matching_allocation",
    "welfare_report",
    "BUILTIN_NAMES",
    "Scenario",
    "ScenarioError",
    "__version__",
    "arrivals",
    "builtin_scenario",
    "ce_exponential_load",
    "ce_generic",
    "derive_seed",
    "endowment_shares",
    "load_scenario",
    "market_clearing_gap",
    "mc_ce_oracle",
    "mc_ce_with_stderr",
    "scenario_from_dict",
    "scenario_to_dict",
    "substream",
    "validate_scenario",
]
