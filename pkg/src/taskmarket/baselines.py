"""Comparison allocation rules and Monte Carlo validation.

Three reference rules bracket the market outcome: whole-task assignment by
maximum-weight bipartite matching on the efficiency indices, a seeded
random split, and the equal split. welfare_report scores any set of
market-clearing profiles by expected aggregate utility, and
simulate_realized_utilities replays an allocation against freshly drawn
arrivals to confirm agents are indifferent between the stochastic load and
its deterministic equivalent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .auction import AuctionConfig, run_auction
from .preferences import expected_utility
from .scenario import Scenario, market_clearing_gap
from .seeding import substream

METHOD_WALRASIAN = "Walrasian"
METHOD_MATCHING = "WeightedMatching"
METHOD_RANDOM = "Random"
METHOD_EQUAL = "Equal"

_TIE_SLACK = 1e-9


@dataclass
class BaselineAllocation:
    method: str
    shares: np.ndarray  # (N, M, S), columns sum to 1


def _assignment_value(weights: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return float(weights[rows, cols].sum())


def matching_assignment(scn: Scenario, state: int) -> tuple[tuple[int, ...], float]:
    """Max-weight assignment of tasks to distinct agents in one state.

    Returns (agent index per task, total weight). Among maximum-weight
    assignments the lexicographically smallest agent tuple is chosen,
    resolved task by task with an optimal-completion check.
    """
    n, m = scn.n_agents, scn.n_tasks
    if m > n:
        raise ValueError(f"matching needs at least as many agents as tasks, got {n} < {m}")
    if not 0 <= state < scn.n_states:
        raise ValueError(f"state {state} out of range")
    weights = scn.rho[:, :, state].T  # (tasks, agents)
    best_total = _assignment_value(weights)
    chosen: list[int] = []
    used: set[int] = set()
    prefix = 0.0
    for task in range(m):
        rest_tasks = list(range(task + 1, m))
        for agent in range(n):
            if agent in used:
                continue
            rest_agents = [a for a in range(n) if a not in used and a != agent]
            completion = (
                _assignment_value(weights[np.ix_(rest_tasks, rest_agents)])
                if rest_tasks
                else 0.0
            )
            if prefix + weights[task, agent] + completion >= best_total - _TIE_SLACK:
                chosen.append(agent)
                used.add(agent)
                prefix += weights[task, agent]
                break
    return tuple(chosen), best_total


def weighted_matching_allocation(scn: Scenario) -> BaselineAllocation:
    """Whole-task assignment per state; unmatched agents receive nothing."""
    shares = np.zeros(scn.rho.shape)
    for s in range(scn.n_states):
        assignment, _ = matching_assignment(scn, s)
        for task, agent in enumerate(assignment):
            shares[agent, task, s] = 1.0
    return BaselineAllocation(method=METHOD_MATCHING, shares=shares)


def random_allocation(scn: Scenario, seed: int) -> BaselineAllocation:
    """Per (task, state): independent uniforms normalized to sum 1."""
    rng = substream(int(seed), "baseline-random")
    raw = rng.uniform(size=scn.rho.shape)
    return BaselineAllocation(
        method=METHOD_RANDOM, shares=raw / raw.sum(axis=0, keepdims=True)
    )


def equal_allocation(scn: Scenario) -> BaselineAllocation:
    shares = np.full(scn.rho.shape, 1.0 / scn.n_agents)
    return BaselineAllocation(method=METHOD_EQUAL, shares=shares)


def walrasian_allocation(
    scn: Scenario, config: AuctionConfig | None = None
) -> BaselineAllocation:
    report = run_auction(scn, config)
    if not report.converged:
        raise ValueError(
            "auction did not converge; rerun with more iterations or a looser epsilon"
        )
    return BaselineAllocation(method=METHOD_WALRASIAN, shares=report.shares)


@dataclass
class WelfareComparison:
    welfare: dict  # method -> expected aggregate utility
    per_agent: dict  # method -> (N,) expected utilities


def welfare_report(
    scn: Scenario, allocations: list[BaselineAllocation], clearing_tol: float = 0.02
) -> WelfareComparison:
    welfare: dict[str, float] = {}
    per_agent: dict[str, np.ndarray] = {}
    for base in allocations:
        shares = np.asarray(base.shares, dtype=float)
        if shares.shape != scn.rho.shape:
            raise ValueError(
                f"{base.method}: shares must have shape {scn.rho.shape}, got {shares.shape}"
            )
        gap = market_clearing_gap(shares)
        if gap > clearing_tol:
            raise ValueError(
                f"{base.method}: profile is not market-clearing (gap {gap:.3g})"
            )
        values = np.array(
            [expected_utility(scn, n, shares) for n in range(scn.n_agents)]
        )
        per_agent[base.method] = values
        welfare[base.method] = float(values.sum())
    return WelfareComparison(welfare=welfare, per_agent=per_agent)


@dataclass
class SimulationResult:
    realized: np.ndarray  # (N,) mean belief-weighted realized utility
    stderr: np.ndarray  # (N,) standard error of the mean
    predicted: np.ndarray  # (N,) certainty-equivalent prediction
    per_state_realized: np.ndarray  # (N, S) realized means within each state
    n_draws: int


_SIM_CHUNK = 20_000


def simulate_realized_utilities(
    scn: Scenario, shares: np.ndarray, n_draws: int, seed: int
) -> SimulationResult:
    """Replay an allocation against sampled arrivals.

    Each draw realizes every agent's arrival, forms the total load per
    (task, state), hands each agent its share of that load, and scores the
    realized utility; states are then belief-weighted. The certainty
    equivalence construction predicts the mean exactly up to sampling error.
    """
    shares = np.asarray(shares, dtype=float)
    if shares.shape != scn.rho.shape:
        raise ValueError(f"shares must have shape {scn.rho.shape}, got {shares.shape}")
    if n_draws < 1:
        raise ValueError(f"n_draws must be at least 1, got {n_draws}")
    n, m, s = scn.rho.shape

    totals = np.zeros((n_draws, m, s))
    for j in range(n):
        for mi in range(m):
            for si in range(s):
                rng = substream(int(seed), "simulate", j, mi, si)
                totals[:, mi, si] += scn.arrivals[j][mi][si].sample(rng, n_draws)

    sum_v = np.zeros(n)
    sum_v2 = np.zeros(n)
    state_sum = np.zeros((n, s))
    for lo in range(0, n_draws, _SIM_CHUNK):
        q = totals[lo : lo + _SIM_CHUNK]
        loads = shares[None, :, :, :] * q[:, None, :, :]
        u = (scn.rho[None] * -np.expm1(-loads / scn.rho[None])).sum(axis=2)  # (b, N, S)
        # reduce along the contiguous draw axis so numpy sums pairwise
        state_sum += np.ascontiguousarray(u.transpose(1, 2, 0)).sum(axis=2)
        v = np.ascontiguousarray(np.einsum("bns,ns->bn", u, scn.beliefs).T)
        sum_v += v.sum(axis=1)
        sum_v2 += (v * v).sum(axis=1)

    realized = sum_v / n_draws
    if n_draws > 1:
        var = np.maximum(sum_v2 - n_draws * realized * realized, 0.0) / (n_draws - 1)
        stderr = np.sqrt(var / n_draws)
    else:
        stderr = np.zeros(n)
    predicted = np.array([expected_utility(scn, i, shares) for i in range(n)])
    return SimulationResult(
        realized=realized,
        stderr=stderr,
        predicted=predicted,
        per_state_realized=state_sum / n_draws,
        n_draws=int(n_draws),
    )


def efficiency_share_table(scn: Scenario, shares: np.ndarray) -> list[tuple]:
    """Rows (agent, task, state, relative index, share) for scatter plots.

    The relative performance index is the agent's efficiency divided by the
    column total, pairing each cell's standing with the share it holds.
    """
    shares = np.asarray(shares, dtype=float)
    if shares.shape != scn.rho.shape:
        raise ValueError(f"shares must have shape {scn.rho.shape}, got {shares.shape}")
    rel = scn.rho / scn.rho.sum(axis=0, keepdims=True)
    rows = []
    for i in range(scn.n_agents):
        for mi in range(scn.n_tasks):
            for si in range(scn.n_states):
                rows.append((i, mi, si, float(rel[i, mi, si]), float(shares[i, mi, si])))
    return rows
