"""Agent preferences and the per-state demand problem.

Utility of a realized load x at efficiency rho is rho * (1 - exp(-x/rho)),
task-separable across tasks and belief-weighted across states. Valuing a
share r of a task through the deterministic equivalent of its total load
gives a composite valuation g(r) per (agent, task, state): strictly
increasing, strictly concave, with closed-form derivatives for exponential
arrivals.

Demand at prices p maximizes the sum of composite valuations over the
budget set {r in [0,1]^M : p.r <= p.w}. The KKT system is solved by nested
bracketing: an outer bracket on the budget multiplier mu (p.r(mu) is
nonincreasing in mu) and an inner solve of g'(r) = mu p per task. Both
levels accept a Newton candidate when it lands inside the bracket and fall
back to the midpoint otherwise, which keeps the 1e-12 interval semantics of
plain bisection at a fraction of the evaluations. The inner marginal g' is
convex and decreasing for every supported arrival kind, so Newton from the
left endpoint is monotone and cannot overshoot.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

from .arrivals import EXPONENTIAL
from .ce import build_terms
from .scenario import Scenario, endowment_shares
from .seeding import derive_seed

_MU_BRACKET_TOL = 1e-12
_MAX_OUTER_ITERS = 200
_NEWTON_STEP_TOL = 1e-14


def task_utility(rho: float, x: float) -> float:
    """Utility rho * (1 - exp(-x/rho)) of carrying load x at efficiency rho."""
    if not np.isfinite(rho) or rho <= 0:
        raise ValueError(f"rho must be strictly positive and finite, got {rho!r}")
    if not np.isfinite(x) or x < 0:
        raise ValueError(f"load x must be nonnegative, got {x!r}")
    # np.expm1 keeps scalar and vectorized evaluations bitwise identical
    return float(rho * -np.expm1(-x / rho))


class _ExpComposite:
    """Composite valuation when every contributor is exponential.

    With a_j = rho * rate_j:
      g(r)  = rho * (1 - prod_j a_j / (a_j + r))
      g'(r) = rho * P(r) * T(r),     P = prod_j a_j/(a_j+r), T = sum_j 1/(a_j+r)
      g''(r) = -rho * P * (T^2 + sum_j 1/(a_j+r)^2)
    """

    __slots__ = ("rho", "aa")

    def __init__(self, rho: float, rates) -> None:
        self.rho = rho
        self.aa = tuple(rho * lam for lam in rates)

    def value(self, r: float) -> float:
        p = 1.0
        for a in self.aa:
            p *= a / (a + r)
        return self.rho * (1.0 - p)

    def slope(self, r: float) -> float:
        p = 1.0
        t = 0.0
        for a in self.aa:
            h = a + r
            p *= a / h
            t += 1.0 / h
        return self.rho * p * t

    def slope_curv(self, r: float) -> tuple[float, float]:
        p = 1.0
        t = 0.0
        t2 = 0.0
        for a in self.aa:
            h = a + r
            p *= a / h
            inv = 1.0 / h
            t += inv
            t2 += inv * inv
        g1 = self.rho * p * t
        return g1, -self.rho * p * (t * t + t2)

    def value_slope(self, r: float) -> tuple[float, float]:
        p = 1.0
        t = 0.0
        for a in self.aa:
            h = a + r
            p *= a / h
            t += 1.0 / h
        return self.rho * (1.0 - p), self.rho * p * t


class _GenericComposite:
    """Composite valuation over arbitrary arrival terms via g = u(d(r))."""

    __slots__ = ("rho", "terms")

    def __init__(self, rho: float, terms) -> None:
        self.rho = rho
        self.terms = terms

    def _d012(self, r: float) -> tuple[float, float, float]:
        d = d1 = d2 = 0.0
        for t in self.terms:
            d += t.d(self.rho, r)
            d1 += t.d1(self.rho, r)
            d2 += t.d2(self.rho, r)
        return d, d1, d2

    def value(self, r: float) -> float:
        d = sum(t.d(self.rho, r) for t in self.terms)
        return float(self.rho * -np.expm1(-d / self.rho))

    def slope(self, r: float) -> float:
        d, d1, _ = self._d012(r)
        return math.exp(-d / self.rho) * d1

    def slope_curv(self, r: float) -> tuple[float, float]:
        d, d1, d2 = self._d012(r)
        e = math.exp(-d / self.rho)
        return e * d1, e * (d2 - d1 * d1 / self.rho)

    def value_slope(self, r: float) -> tuple[float, float]:
        d, d1, _ = self._d012(r)
        e = math.exp(-d / self.rho)
        return self.rho * (1.0 - e), e * d1


class Valuations:
    """Per-scenario table of composite valuations plus endowments.

    Construction is cached per scenario object; the table is immutable and
    shared by the demand solver, the auction loop, and the coalition solver.
    """

    _cache: "weakref.WeakKeyDictionary[Scenario, Valuations]" = weakref.WeakKeyDictionary()

    def __init__(self, scn: Scenario) -> None:
        self.scn = scn
        n, m, s = scn.rho.shape
        self.endowments = endowment_shares(scn)
        self.all_exponential = all(
            scn.arrivals[i][j][k].kind == EXPONENTIAL
            for i in range(n)
            for j in range(m)
            for k in range(s)
        )
        comps = []
        for i in range(n):
            row_i = []
            for j in range(m):
                row_j = []
                for k in range(s):
                    rho = float(scn.rho[i, j, k])
                    specs = [scn.arrivals[l][j][k] for l in range(n)]
                    if self.all_exponential:
                        row_j.append(_ExpComposite(rho, [sp.rate for sp in specs]))
                    else:
                        terms = build_terms(
                            rho,
                            specs,
                            seed=scn.seed,
                            purpose="valuation-truncated-normal",
                            indices=(j, k),
                        )
                        row_j.append(_GenericComposite(rho, terms))
                row_i.append(row_j)
            comps.append(row_i)
        self._comps = comps
        if self.all_exponential:
            rates = np.array(
                [[[scn.arrivals[i][j][k].rate for k in range(s)] for j in range(m)] for i in range(n)]
            )
            # A[n, m, s, j] = rho[n,m,s] * rate[j,m,s]
            self._A = scn.rho[:, :, :, None] * rates.transpose(1, 2, 0)[None, :, :, :]
        else:
            self._A = None

    @classmethod
    def for_scenario(cls, scn: Scenario) -> "Valuations":
        table = cls._cache.get(scn)
        if table is None:
            table = cls(scn)
            cls._cache[scn] = table
        return table

    def composite(self, agent: int, task: int, state: int):
        return self._comps[agent][task][state]

    def state_value(self, agent: int, state: int, shares_row: np.ndarray) -> float:
        return float(
            sum(
                self._comps[agent][m][state].value(float(shares_row[m]))
                for m in range(self.scn.n_tasks)
            )
        )

    def block_evaluator(self, members, states):
        """Batched per-state values and marginals over a member/state block.

        members: agent indices (length C); states: state indices (length T).
        Returns eval(x) -> (values, slopes) for x shaped (C, M, T): values is
        (C, T), the state utility of each member's share rows, and slopes is
        (C, M, T), the per-share marginals. Weighting across states is the
        caller's business.
        """
        members = list(members)
        states = list(states)
        m_all = range(self.scn.n_tasks)
        if self._A is not None:
            a_sub = self._A[np.ix_(members, list(m_all), states)]
            rho_sub = self.scn.rho[np.ix_(members, list(m_all), states)]

            def evaluate(x: np.ndarray):
                h = a_sub + x[..., None]
                p = np.prod(a_sub / h, axis=3)
                t = np.sum(1.0 / h, axis=3)
                values = (rho_sub * (1.0 - p)).sum(axis=1)
                slopes = rho_sub * p * t
                return values, slopes

            return evaluate

        comps = [[[self._comps[i][m][s] for s in states] for m in m_all] for i in members]

        def evaluate(x: np.ndarray):
            values = np.zeros((len(members), len(states)))
            slopes = np.zeros_like(x)
            for ci in range(len(members)):
                for mi in range(self.scn.n_tasks):
                    for ti in range(len(states)):
                        val, slope = comps[ci][mi][ti].value_slope(float(x[ci, mi, ti]))
                        values[ci, ti] += val
                        slopes[ci, mi, ti] = slope
            return values, slopes

        return evaluate


def composite_share_utility(
    scn: Scenario, agent: int, task: int, state: int, r: float
) -> tuple[float, float]:
    """Value and marginal of holding share r of one state-contingent task."""
    if not np.isfinite(r) or r < 0 or r > 1:
        raise ValueError(f"share r must lie in [0, 1], got {r!r}")
    comp = Valuations.for_scenario(scn).composite(agent, task, state)
    return comp.value_slope(float(r))


def state_utility(scn: Scenario, agent: int, state: int, shares_row: np.ndarray) -> float:
    """Deterministic-equivalent utility of one state's share row (length M)."""
    return Valuations.for_scenario(scn).state_value(agent, state, np.asarray(shares_row, float))


def expected_utility(scn: Scenario, agent: int, profile: np.ndarray) -> float:
    """Belief-weighted sum of state utilities for one agent, full (N,M,S) profile."""
    profile = np.asarray(profile, dtype=float)
    vals = Valuations.for_scenario(scn)
    total = 0.0
    for s in range(scn.n_states):
        a = float(scn.beliefs[agent, s])
        if a > 0.0:
            total += a * vals.state_value(agent, s, profile[agent, :, s])
    return total


@dataclass
class DemandResult:
    shares: np.ndarray  # (M,) in [0, 1]
    multiplier: float  # budget shadow price, >= 0
    budget_slack: float  # p.w - p.r, >= -1e-9


def _solve_marginal(comp, c: float) -> tuple[float, float | None]:
    """Share r in [0,1] with g'(r) = c, plus g'' there; None curvature at corners."""
    if comp.slope(0.0) <= c:
        return 0.0, None
    if comp.slope(1.0) >= c:
        return 1.0, None
    r = 0.0
    g2 = None
    for _ in range(64):
        g1, g2 = comp.slope_curv(r)
        step = (c - g1) / g2  # g1 > c and g2 < 0 keep this positive
        if step <= 0.0:
            break
        nxt = r + step
        if nxt >= 1.0:
            nxt = 1.0
        if nxt - r <= _NEWTON_STEP_TOL:
            r = nxt
            break
        r = nxt
    return r, g2


def solve_share_for_marginal(comp, marginal: float) -> float:
    """Inverse of g' clipped to [0, 1]; used by the planner benchmark."""
    return _solve_marginal(comp, marginal)[0]


def demand(
    scn: Scenario,
    agent: int,
    state: int,
    prices: np.ndarray,
    endowment: np.ndarray | None = None,
) -> DemandResult:
    """Optimal share bundle of one agent at one state given prices.

    Maximizes the sum of composite valuations subject to p.r <= p.w over
    [0,1]^M. Beliefs never enter: the budget and the objective are both
    per-state, so any positive state weight rescales the objective without
    moving its argmax.
    """
    vals = Valuations.for_scenario(scn)
    p = np.asarray(prices, dtype=float)
    if p.shape != (scn.n_tasks,):
        raise ValueError(f"prices must have shape ({scn.n_tasks},), got {p.shape}")
    if np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise ValueError(f"prices must be strictly positive and finite, got {p}")
    w = vals.endowments[agent, :, state] if endowment is None else np.asarray(endowment, float)
    budget = float(p @ w)

    comps = [vals.composite(agent, m, state) for m in range(scn.n_tasks)]
    ones = np.ones(scn.n_tasks)
    full_cost = float(p @ ones)
    if full_cost <= budget:
        # unconstrained optimum r = 1 fits the budget (single-owner economies)
        return DemandResult(shares=ones, multiplier=0.0, budget_slack=budget - full_cost)

    slopes0 = [comp.slope(0.0) for comp in comps]
    mu_hi = max(s0 / p[m] for m, s0 in enumerate(slopes0))

    def eval_mu(mu: float):
        shares = np.empty(scn.n_tasks)
        dphi = 0.0
        for m, comp in enumerate(comps):
            r, g2 = _solve_marginal(comp, mu * p[m])
            shares[m] = r
            if g2 is not None:
                dphi += p[m] * p[m] / g2
        return shares, float(p @ shares) - budget, dphi

    lo, hi = 0.0, mu_hi
    mu = hi
    shares, phi, dphi = eval_mu(hi)  # phi(mu_hi) = -budget < 0
    best = (mu, shares, phi)
    for _ in range(_MAX_OUTER_ITERS):
        if hi - lo <= _MU_BRACKET_TOL:
            break
        cand = None
        if dphi < 0.0:
            cand = mu - phi / dphi
        if cand is None or not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        shares, phi, dphi = eval_mu(cand)
        mu = cand
        if phi > 0.0:
            lo = cand
        else:
            hi = cand
            best = (mu, shares, phi)
        if abs(phi) <= 1e-14 * max(1.0, budget):
            best = (mu, shares, min(phi, 0.0))
            break

    mu, shares, phi = best
    return DemandResult(shares=shares, multiplier=mu, budget_slack=-phi)
