"""Walrasian price adjustment over state-contingent task shares.

Each state is a separate market: budgets and demands both live per state, so
the excess-demand field decomposes across states and one loop clears them
jointly. Prices move along excess demand (p <- p + alpha * z, floored away
from zero) until the largest imbalance falls inside the stopping band.

The convergence test runs before the update, so an economy that starts
cleared (a single owner, or symmetric agents at uniform prices) reports
zero iterations. Reported prices are normalized by the first task within
each state; raw prices are kept alongside for diagnostics and replay.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .preferences import Valuations, demand, expected_utility
from .scenario import Scenario

PRICE_FLOOR = 1e-6


@dataclass
class AuctionConfig:
    alpha: float = 0.01
    epsilon: float = 0.01
    max_iters: int = 10000
    initial_prices: np.ndarray | None = None

    def validate(self) -> "AuctionConfig":
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ValueError(f"alpha must be strictly positive, got {self.alpha!r}")
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ValueError(f"epsilon must be strictly positive, got {self.epsilon!r}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters!r}")
        return self


@dataclass
class TraceRow:
    iteration: int
    max_abs_z: float
    prices: np.ndarray  # (M, S) raw prices at this iteration
    walras: np.ndarray  # (S,) value p_s . z_s of excess demand per state


@dataclass
class EquilibriumReport:
    prices: np.ndarray  # (M, S), first task = 1 within each state
    raw_prices: np.ndarray  # (M, S) unnormalized final prices
    shares: np.ndarray  # (N, M, S) demands at the final prices
    iterations: int
    converged: bool
    trace: list[TraceRow] = field(repr=False)
    per_agent_expected_utility: np.ndarray = field(default=None)


def _demand_profile(scn: Scenario, prices: np.ndarray) -> np.ndarray:
    shares = np.empty((scn.n_agents, scn.n_tasks, scn.n_states))
    for s in range(scn.n_states):
        p_s = prices[:, s]
        for n in range(scn.n_agents):
            shares[n, :, s] = demand(scn, n, s, p_s).shares
    return shares


def excess_demand(scn: Scenario, prices: np.ndarray) -> np.ndarray:
    """Aggregate demanded shares minus the unit supply, per (task, state)."""
    prices = np.asarray(prices, dtype=float)
    if prices.shape != (scn.n_tasks, scn.n_states):
        raise ValueError(
            f"prices must have shape ({scn.n_tasks}, {scn.n_states}), got {prices.shape}"
        )
    return _demand_profile(scn, prices).sum(axis=0) - 1.0


def price_update(prices: np.ndarray, z: np.ndarray, alpha: float) -> np.ndarray:
    """One gradient step along excess demand, kept above the price floor."""
    return np.maximum(np.asarray(prices, float) + alpha * np.asarray(z, float), PRICE_FLOOR)


def run_auction(scn: Scenario, config: AuctionConfig | None = None) -> EquilibriumReport:
    cfg = (config or AuctionConfig()).validate()
    Valuations.for_scenario(scn)  # build the table once up front
    shape = (scn.n_tasks, scn.n_states)
    if cfg.initial_prices is None:
        p = np.ones(shape)
    else:
        p = np.asarray(cfg.initial_prices, dtype=float).copy()
        if p.shape != shape:
            raise ValueError(f"initial_prices must have shape {shape}, got {p.shape}")
        if np.any(~np.isfinite(p)) or np.any(p <= 0):
            raise ValueError("initial_prices must be strictly positive and finite")

    trace: list[TraceRow] = []
    converged = False
    t = 0
    while True:
        shares = _demand_profile(scn, p)
        z = shares.sum(axis=0) - 1.0
        max_abs_z = float(np.max(np.abs(z)))
        walras = np.einsum("ms,ms->s", p, z)
        trace.append(TraceRow(iteration=t, max_abs_z=max_abs_z, prices=p.copy(), walras=walras))
        if max_abs_z <= cfg.epsilon:
            converged = True
            break
        if t >= cfg.max_iters:
            break
        p = price_update(p, z, cfg.alpha)
        t += 1

    utilities = np.array([expected_utility(scn, n, shares) for n in range(scn.n_agents)])
    return EquilibriumReport(
        prices=p / p[0:1, :],
        raw_prices=p,
        shares=shares,
        iterations=t,
        converged=converged,
        trace=trace,
        per_agent_expected_utility=utilities,
    )
