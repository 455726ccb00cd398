"""Coalition blocking analysis and core membership verification.

A coalition (bitmask over agents) owns the sum of its members' endowment
shares and may redistribute exactly that wealth, per (task, state) column.
The reference allocation is blocked when some coalition can hold every
member at least at its reference value while pushing one member strictly
above it (weak), or push all members strictly above at once (strong).

Both predicates reduce to one concave program per (coalition, target,
mode): maximize the target's value subject to floor constraints on the
other members over a product of scaled simplices. Ex-post programs floor
each non-target member's state utility within the realized state. Ex-ante
programs evaluate the target in expectation over a full state-contingent
plan whose floors hold per state: a deviation agreed before the state is
revealed must leave the other members no worse off whichever state occurs.
Per-state floors make the ex-ante program separable across states, so its
value is the belief-weighted composition of the per-state solves.

Floors on expected utility instead (floors="expected") admit belief bets:
members with different beliefs reshuffle state-contingent shares so that
everyone gains in expectation, which blocks any per-state market outcome
whenever beliefs differ. That variant is kept for diagnostics; the default
per-state floors are the semantics under which market allocations are
verifiable core members.

The solver is projected gradient ascent with an escalating quadratic
penalty on the floors and multiple starts. Member values are concave and
the floors carve a convex set, so a stationary positive residual in the
pure feasibility phase certifies that the floors cannot be met at all
(improvement -inf), and any feasible witness lower-bounds the program.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .preferences import Valuations, _solve_marginal
from .scenario import Scenario
from .seeding import substream

MODE_EX_ANTE = "ex-ante"

FLOORS_PER_STATE = "per-state"
FLOORS_EXPECTED = "expected"


def mode_ex_post(state: int) -> str:
    return f"ex-post-{state}"


def coalition_mask(members) -> int:
    mask = 0
    for n in members:
        mask |= 1 << int(n)
    return mask


def coalition_members(mask: int, n_agents: int) -> tuple[int, ...]:
    return tuple(n for n in range(n_agents) if mask >> n & 1)


def all_coalitions(n_agents: int):
    """Nonempty subsets of agents as bitmasks, ascending."""
    return range(1, 1 << n_agents)


def coalition_endowment(scn: Scenario, mask: int) -> np.ndarray:
    """Total endowment share the coalition controls, per (task, state)."""
    members = coalition_members(mask, scn.n_agents)
    if not members:
        raise ValueError("coalition must be nonempty")
    w = Valuations.for_scenario(scn).endowments
    return w[list(members)].sum(axis=0)


@dataclass
class SolverSettings:
    """Projected-gradient controls for the blocking programs."""

    restarts: int = 5
    kappas: tuple[float, ...] = (1e3, 1e5, 1e7, 1e9)
    iters: int = 250
    restore_iters: int = 800
    feas_tol: float = 1e-8
    step0: float = 0.5


def _project_simplex_columns(x: np.ndarray, total: np.ndarray) -> np.ndarray:
    """Project each column of x (C, K) onto {v >= 0, sum v = total[k]}."""
    c, k = x.shape
    u = -np.sort(-x, axis=0)
    css = np.cumsum(u, axis=0) - total[None, :]
    counts = np.arange(1, c + 1)[:, None]
    positive = u - css / counts > 0
    last = c - 1 - np.argmax(positive[::-1], axis=0)
    tau = css[last, np.arange(k)] / (last + 1.0)
    return np.maximum(x - tau[None, :], 0.0)


def _pg_ascend(x, objective, project, iters, step0, on_point):
    """Monotone projected-gradient ascent with backtracking.

    objective(x) -> (obj, grad, values); on_point(x, values) runs at every
    accepted iterate. Returns (x, stalled); stalled means no tried step
    length improved the objective.
    """
    obj, grad, v = objective(x)
    on_point(x, v)
    eta = step0
    stalled = False
    for _ in range(iters):
        accepted = False
        for _ in range(45):
            xn = project(x + eta * grad)
            objn, gradn, vn = objective(xn)
            if objn > obj:
                accepted = True
                break
            eta *= 0.5
            if eta < 1e-18:
                break
        if not accepted:
            stalled = True
            break
        moved = float(np.max(np.abs(xn - x)))
        x, obj, grad, v = xn, objn, gradn, vn
        on_point(x, v)
        eta = min(eta * 1.3, 1e3)
        if moved <= 1e-15:
            stalled = True
            break
    return x, stalled


@dataclass
class _BlockSolve:
    value: float
    conclusive: bool


def _solve_block(
    evaluate, w_sub, starts, t_idx, obj_w, floor_refs, floor_weights, scales, settings
) -> _BlockSolve:
    """Maximize the target's weighted value under member floor constraints.

    evaluate(x) -> (values (C, T), slopes (C, M, T)). obj_w (T,) weights the
    target's states. floor_weights None means per-state floors with
    floor_refs shaped (C, T); otherwise floors bind the weighted sums
    (floor_refs (C,), floor_weights (C, T)). The target's own row never
    carries a floor.
    """
    c = floor_refs.shape[0]
    shape = starts[0].shape
    w_flat = w_sub.reshape(-1)
    per_state = floor_weights is None

    def project(x):
        return _project_simplex_columns(x.reshape(c, -1), w_flat).reshape(shape)

    feas_abs = settings.feas_tol * scales  # same shape as floor_refs

    best_vt = -math.inf
    least_viol = math.inf
    least_x = starts[0]

    def hinge_and_coeff(values):
        if per_state:
            h = np.maximum(floor_refs - values, 0.0)
            h[t_idx] = 0.0
            return h, h
        agg = (floor_weights * values).sum(axis=1)
        h = np.maximum(floor_refs - agg, 0.0)
        h[t_idx] = 0.0
        return h, h[:, None] * floor_weights

    def on_point(x, values):
        nonlocal best_vt, least_viol, least_x
        h, _ = hinge_and_coeff(values)
        metric = float(np.max(h / np.maximum(feas_abs, 1e-300))) if c > 1 else 0.0
        if metric <= 1.0:
            best_vt = max(best_vt, float(obj_w @ values[t_idx]))
        if metric < least_viol:
            least_viol = metric
            least_x = x.copy()

    def make_objective(kappa):
        def objective(x):
            values, slopes = evaluate(x)
            h, coeff = hinge_and_coeff(values)
            obj = float(obj_w @ values[t_idx]) - kappa * float(np.sum(h * h))
            grad = 2.0 * kappa * coeff[:, None, :] * slopes
            grad[t_idx] = obj_w[None, :] * slopes[t_idx]
            return obj, grad, values

        return objective

    def feasibility_objective(x):
        values, slopes = evaluate(x)
        h, coeff = hinge_and_coeff(values)
        obj = -float(np.sum(h * h))
        grad = 2.0 * coeff[:, None, :] * slopes
        grad[t_idx] = 0.0
        return obj, grad, values

    def maximize_from(x0):
        x = x0
        for kappa in settings.kappas:
            x, _ = _pg_ascend(
                x, make_objective(kappa), project, settings.iters, settings.step0, on_point
            )
        return x

    for x0 in starts:
        maximize_from(project(x0))

    if best_vt > -math.inf:
        return _BlockSolve(value=best_vt, conclusive=True)

    # no floor-feasible point seen: drive violations down as far as they go
    x, stalled = _pg_ascend(
        least_x, feasibility_objective, project, settings.restore_iters, settings.step0, on_point
    )
    if best_vt > -math.inf:
        maximize_from(x)
        return _BlockSolve(value=best_vt, conclusive=True)
    if stalled and least_viol > 10.0:
        # convex feasibility problem is stationary at a positive residual:
        # the floors cannot be met with this coalition's wealth
        return _BlockSolve(value=-math.inf, conclusive=True)
    return _BlockSolve(value=-math.inf, conclusive=False)


def _state_refs(scn: Scenario, members, allocation) -> np.ndarray:
    """Per-member per-state utilities of the reference allocation (C, S)."""
    vals = Valuations.for_scenario(scn)
    refs = np.empty((len(members), scn.n_states))
    for i, n in enumerate(members):
        for s in range(scn.n_states):
            refs[i, s] = vals.state_value(n, s, allocation[n, :, s])
    return refs


def _starts(scn, members, states, reference, w_sub, n_random, rng):
    c = len(members)
    w = Valuations.for_scenario(scn).endowments
    starts = []
    ref_sub = reference[np.ix_(list(members), range(scn.n_tasks), states)].astype(float)
    colsum = ref_sub.sum(axis=0)
    scale = np.where(colsum > 0, w_sub / np.where(colsum > 0, colsum, 1.0), 0.0)
    rescaled = ref_sub * scale[None, :, :]
    rescaled += (w_sub - rescaled.sum(axis=0))[None, :, :] / c
    starts.append(np.maximum(rescaled, 0.0))
    starts.append(w[np.ix_(list(members), range(scn.n_tasks), states)].astype(float))
    k = w_sub.size
    for _ in range(max(0, n_random)):
        draw = rng.dirichlet(np.ones(c), size=k).T.reshape(c, *w_sub.shape)
        starts.append(draw * w_sub[None, :, :])
    return starts


def _solve_state_program(
    scn: Scenario,
    mask: int,
    members,
    reference: np.ndarray,
    refs_by_state: np.ndarray,
    target: int,
    state: int,
    settings: SolverSettings,
) -> _BlockSolve:
    """Ex-post blocking program in one state; value is the achieved utility."""
    vals = Valuations.for_scenario(scn)
    t_idx = members.index(target)
    w_sub = coalition_endowment(scn, mask)[:, [state]]
    if len(members) == 1:
        return _BlockSolve(
            value=vals.state_value(target, state, w_sub[:, 0]), conclusive=True
        )
    evaluate = vals.block_evaluator(members, [state])
    refs = refs_by_state[:, [state]]
    scales = np.maximum(np.abs(refs), 1e-9)
    rng = substream(scn.seed, "ssc-restart", mask, target, state)
    starts = _starts(scn, members, [state], reference, w_sub, settings.restarts - 2, rng)
    starts = starts[: max(1, settings.restarts)]
    return _solve_block(
        evaluate,
        w_sub,
        starts,
        t_idx,
        np.ones(1),
        refs,
        None,
        scales,
        settings,
    )


def _solve_expected_floor_program(
    scn: Scenario,
    mask: int,
    members,
    reference: np.ndarray,
    refs_by_state: np.ndarray,
    target: int,
    settings: SolverSettings,
) -> _BlockSolve:
    """Joint program flooring expected utilities; admits belief bets."""
    vals = Valuations.for_scenario(scn)
    t_idx = members.index(target)
    states = list(range(scn.n_states))
    w_sub = coalition_endowment(scn, mask)
    weights = scn.beliefs[list(members), :]
    if len(members) == 1:
        value = float(
            sum(
                weights[0, s] * vals.state_value(target, s, w_sub[:, s])
                for s in states
            )
        )
        return _BlockSolve(value=value, conclusive=True)
    evaluate = vals.block_evaluator(members, states)
    exp_refs = (weights * refs_by_state).sum(axis=1)
    scales = np.maximum(np.abs(exp_refs), 1e-9)
    rng = substream(scn.seed, "ssc-restart", mask, target, -1)
    starts = _starts(scn, members, states, reference, w_sub, settings.restarts - 2, rng)
    starts = starts[: max(1, settings.restarts)]
    return _solve_block(
        evaluate,
        w_sub,
        starts,
        t_idx,
        weights[t_idx],
        exp_refs,
        weights,
        scales,
        settings,
    )


def _compose_ex_ante(
    scn: Scenario, target: int, state_solves, refs_t: np.ndarray
) -> _BlockSolve:
    """Belief-weight the per-state programs into the ex-ante improvement."""
    beliefs = scn.beliefs[target]
    if any(not sv.conclusive for sv in state_solves):
        return _BlockSolve(value=-math.inf, conclusive=False)
    if any(sv.value == -math.inf for sv in state_solves):
        return _BlockSolve(value=-math.inf, conclusive=True)
    gain = sum(
        beliefs[s] * (state_solves[s].value - refs_t[s]) for s in range(scn.n_states)
    )
    return _BlockSolve(value=float(gain), conclusive=True)


def _best_improvement_status(
    scn: Scenario,
    mask: int,
    reference: np.ndarray,
    target: int,
    state: int | None,
    settings: SolverSettings,
    floors: str = FLOORS_PER_STATE,
) -> _BlockSolve:
    members = coalition_members(mask, scn.n_agents)
    if not members:
        raise ValueError("coalition must be nonempty")
    if target not in members:
        raise ValueError(f"target {target} is not in coalition {mask:#b}")
    reference = np.asarray(reference, dtype=float)
    if reference.shape != scn.rho.shape:
        raise ValueError(
            f"reference must have shape {scn.rho.shape}, got {reference.shape}"
        )
    if floors not in (FLOORS_PER_STATE, FLOORS_EXPECTED):
        raise ValueError(f"unknown floors mode {floors!r}")
    refs_by_state = _state_refs(scn, members, reference)
    t_idx = members.index(target)

    if state is not None:
        if not 0 <= state < scn.n_states:
            raise ValueError(f"state {state} out of range")
        solve = _solve_state_program(
            scn, mask, members, reference, refs_by_state, target, state, settings
        )
        if solve.value == -math.inf or not solve.conclusive:
            return solve
        return _BlockSolve(
            value=solve.value - refs_by_state[t_idx, state], conclusive=True
        )

    if floors == FLOORS_EXPECTED:
        solve = _solve_expected_floor_program(
            scn, mask, members, reference, refs_by_state, target, settings
        )
        if solve.value == -math.inf or not solve.conclusive:
            return solve
        exp_ref = float(scn.beliefs[target] @ refs_by_state[t_idx])
        return _BlockSolve(value=solve.value - exp_ref, conclusive=True)

    state_solves = [
        _solve_state_program(
            scn, mask, members, reference, refs_by_state, target, s, settings
        )
        for s in range(scn.n_states)
    ]
    return _compose_ex_ante(scn, target, state_solves, refs_by_state[t_idx])


def best_improvement(
    scn: Scenario,
    mask: int,
    reference: np.ndarray,
    target: int,
    state: int | None = None,
    settings: SolverSettings | None = None,
    floors: str = FLOORS_PER_STATE,
) -> float:
    """Best gain the target can get while other members stay at reference.

    state=None evaluates ex-ante: a state-contingent redistribution of the
    coalition's wealth, floored so no other member falls below its
    reference utility in any state, scored by the target's expected
    utility. An integer state evaluates the ex-post program within that
    state alone. Positive values mean the coalition weakly blocks through
    this target; -inf means the floors cannot be met with the coalition's
    wealth. floors="expected" switches the ex-ante floors to expected
    utilities (diagnostic; belief bets then block almost any allocation).
    """
    return _best_improvement_status(
        scn, mask, reference, target, state, settings or SolverSettings(), floors
    ).value


@dataclass
class SscReport:
    ex_ante: dict  # (mask, target) -> improvement value
    ex_post: list  # per state: (mask, target) -> improvement value
    verdict: bool
    weak_blocked: bool
    strong_blocked: bool
    worst_offender: tuple | None  # (mask, target, mode, value)
    inconclusive: list = field(default_factory=list)  # (mask, target, mode)
    market_clearing_gap: float = 0.0
    tol: float = 1e-6


def blocking_rows(report: SscReport) -> list[tuple[int, int, str, float]]:
    """Flatten a report into (coalition, target, mode, improvement) rows.

    Canonical order: (coalition, target) ascending, the ex-ante program
    first, then each realized state's program.
    """
    rows = []
    for (mask, target), value in sorted(report.ex_ante.items()):
        rows.append((mask, target, MODE_EX_ANTE, float(value)))
        for s, table in enumerate(report.ex_post):
            rows.append((mask, target, mode_ex_post(s), float(table[(mask, target)])))
    return rows


def check_ssc(
    scn: Scenario,
    allocation: np.ndarray,
    tol: float = 1e-6,
    clearing_tol: float = 0.02,
    max_agents: int = 20,
    settings: SolverSettings | None = None,
) -> SscReport:
    """Verify an allocation sits in the strong sequential core.

    Enumerates every nonempty coalition and solves the blocking program for
    each member target, ex-post in every state and ex-ante as the
    belief-weighted composition of the per-state programs. The verdict is
    true only when the allocation is market-clearing within clearing_tol,
    every improvement stays at or below tol relative to the target's
    reference value, and every program resolved conclusively.
    """
    if scn.n_agents > max_agents:
        raise ValueError(
            f"{scn.n_agents} agents exceeds the enumeration limit {max_agents}"
        )
    allocation = np.asarray(allocation, dtype=float)
    if allocation.shape != scn.rho.shape:
        raise ValueError(
            f"allocation must have shape {scn.rho.shape}, got {allocation.shape}"
        )
    settings = settings or SolverSettings()
    gap = float(np.max(np.abs(allocation.sum(axis=0) - 1.0)))
    if gap > clearing_tol:
        return SscReport(
            ex_ante={},
            ex_post=[{} for _ in range(scn.n_states)],
            verdict=False,
            weak_blocked=False,
            strong_blocked=False,
            worst_offender=None,
            market_clearing_gap=gap,
            tol=tol,
        )

    ex_ante: dict = {}
    ex_post: list[dict] = [{} for _ in range(scn.n_states)]
    strict: dict = {}  # (mask, mode) -> list of bools per member
    inconclusive: list[tuple[int, int, str]] = []
    worst = None
    worst_excess = -math.inf

    def record(mask, target, mode, value, conclusive, ref_scale):
        nonlocal worst, worst_excess
        threshold = tol * max(abs(ref_scale), 1e-9)
        if not conclusive:
            inconclusive.append((mask, target, mode))
            strict.setdefault((mask, mode), []).append(False)
            return
        strict.setdefault((mask, mode), []).append(value > threshold)
        if value - threshold > worst_excess:
            worst_excess = value - threshold
            worst = (mask, target, mode, value)

    for mask in all_coalitions(scn.n_agents):
        members = coalition_members(mask, scn.n_agents)
        refs_by_state = _state_refs(scn, members, allocation)
        for t_idx, target in enumerate(members):
            state_solves = [
                _solve_state_program(
                    scn, mask, members, allocation, refs_by_state, target, s, settings
                )
                for s in range(scn.n_states)
            ]
            for s, solve in enumerate(state_solves):
                if solve.conclusive and solve.value > -math.inf:
                    gain = float(solve.value - refs_by_state[t_idx, s])
                else:
                    gain = solve.value
                ex_post[s][(mask, target)] = gain
                record(
                    mask, target, mode_ex_post(s), gain, solve.conclusive,
                    refs_by_state[t_idx, s],
                )
            ante = _compose_ex_ante(scn, target, state_solves, refs_by_state[t_idx])
            ex_ante[(mask, target)] = ante.value
            exp_ref = float(scn.beliefs[target] @ refs_by_state[t_idx])
            record(mask, target, MODE_EX_ANTE, ante.value, ante.conclusive, exp_ref)

    weak = any(any(flags) for flags in strict.values())
    strong = any(flags and all(flags) for flags in strict.values())
    verdict = not weak and not inconclusive
    return SscReport(
        ex_ante=ex_ante,
        ex_post=ex_post,
        verdict=verdict,
        weak_blocked=weak,
        strong_blocked=strong,
        worst_offender=worst,
        inconclusive=inconclusive,
        market_clearing_gap=gap,
        tol=tol,
    )


def planner_allocation(scn: Scenario) -> tuple[np.ndarray, float]:
    """Belief-weighted welfare maximum over the share simplex, per column.

    Each (task, state) column separates: maximize sum_n a_n g_n(x_n) with
    sum_n x_n = 1 via bisection on the common weighted marginal. Used as the
    efficiency benchmark for market outcomes under common beliefs.
    """
    vals = Valuations.for_scenario(scn)
    n, m_tasks, s_states = scn.rho.shape
    profile = np.zeros((n, m_tasks, s_states))
    for m in range(m_tasks):
        for s in range(s_states):
            weights = scn.beliefs[:, s]
            comps = [vals.composite(i, m, s) for i in range(n)]
            actives = [i for i in range(n) if weights[i] > 0]
            if not actives:
                continue

            def total_at(nu: float) -> float:
                return sum(
                    _solve_marginal(comps[i], nu / weights[i])[0] for i in actives
                )

            hi = max(weights[i] * comps[i].slope(0.0) for i in actives)
            lo = 0.0
            if total_at(hi) >= 1.0:
                nu = hi
            else:
                for _ in range(100):
                    nu = 0.5 * (lo + hi)
                    if total_at(nu) >= 1.0:
                        lo = nu
                    else:
                        hi = nu
                nu = lo
            shares = np.array(
                [
                    _solve_marginal(comps[i], nu / weights[i])[0] if weights[i] > 0 else 0.0
                    for i in range(n)
                ]
            )
            total = shares.sum()
            if total > 0:
                shares = shares / total
            profile[:, m, s] = shares
    welfare = float(
        sum(
            scn.beliefs[i, s] * vals.state_value(i, s, profile[i, :, s])
            for i in range(n)
            for s in range(s_states)
        )
    )
    return profile, welfare
