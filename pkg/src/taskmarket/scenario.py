"""Economy description and validation.

A scenario couples N agents, M task types, and S network states. Agent n
carries an efficiency index rho[n, m, s] per state-contingent task, a
stochastic arrival spec for the load originating at n, and a belief row over
states. Endowment shares derive from the certainty equivalent of each
agent's own arrival: the fraction of the task an agent "brings to market".
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import arrivals as arr
from .arrivals import ArrivalSpec
from .ce import ce_generic
from .seeding import derive_seed

BUILTIN_NAMES = ("general-example", "toy-sbs")


class ScenarioError(ValueError):
    """Invalid economy description (first violated invariant, with indices)."""


@dataclass(eq=False)
class Scenario:
    rho: np.ndarray  # (N, M, S) efficiency indices
    arrivals: tuple  # [n][m][s] -> ArrivalSpec
    beliefs: np.ndarray  # (N, S) rows sum to 1
    seed: int = 0
    name: str | None = None

    @property
    def n_agents(self) -> int:
        return self.rho.shape[0]

    @property
    def n_tasks(self) -> int:
        return self.rho.shape[1]

    @property
    def n_states(self) -> int:
        return self.rho.shape[2]


def validate_scenario(scn: Scenario) -> Scenario:
    """Check every invariant; return the scenario with belief rows normalized.

    Belief rows within 1e-9 of summing to 1 are rescaled exactly; anything
    further off is rejected. Raises ScenarioError naming the first violation.
    """
    rho = np.asarray(scn.rho, dtype=float)
    if rho.ndim != 3:
        raise ScenarioError(f"rho must have shape (agents, tasks, states), got {rho.shape}")
    n, m, s = rho.shape
    if n < 1 or m < 1 or s < 1:
        raise ScenarioError(f"scenario needs at least one agent, task, and state, got {rho.shape}")

    for i in range(n):
        for j in range(m):
            for k in range(s):
                v = rho[i, j, k]
                if not np.isfinite(v) or v <= 0:
                    raise ScenarioError(
                        f"rho must be strictly positive and finite at agent {i}, task {j}, "
                        f"state {k}: got {v!r}"
                    )

    if len(scn.arrivals) != n:
        raise ScenarioError(f"arrivals must cover {n} agents, got {len(scn.arrivals)}")
    for i in range(n):
        if len(scn.arrivals[i]) != m:
            raise ScenarioError(f"agent {i} arrivals must cover {m} tasks")
        for j in range(m):
            if len(scn.arrivals[i][j]) != s:
                raise ScenarioError(f"agent {i}, task {j} arrivals must cover {s} states")
            for k in range(s):
                spec = scn.arrivals[i][j][k]
                try:
                    spec.validate()
                except ValueError as exc:
                    raise ScenarioError(
                        f"invalid arrival at agent {i}, task {j}, state {k}: {exc}"
                    ) from exc
                if not spec.positive_mass():
                    raise ScenarioError(
                        f"arrival at agent {i}, task {j}, state {k} must place positive "
                        "mass on positive loads"
                    )

    beliefs = np.array(scn.beliefs, dtype=float)
    if beliefs.shape != (n, s):
        raise ScenarioError(f"beliefs must have shape ({n}, {s}), got {beliefs.shape}")
    for i in range(n):
        row = beliefs[i]
        if np.any(~np.isfinite(row)) or np.any(row < 0) or np.any(row > 1):
            raise ScenarioError(f"belief entries of agent {i} must lie in [0, 1], got {row}")
        total = row.sum()
        if abs(total - 1.0) > 1e-9:
            raise ScenarioError(f"belief row must sum to 1 for agent {i}, got {total!r}")
        beliefs[i] = row / total

    if int(scn.seed) < 0:
        raise ScenarioError(f"seed must be a nonnegative integer, got {scn.seed!r}")

    return replace(scn, rho=rho, beliefs=beliefs, seed=int(scn.seed))


def endowment_shares(scn: Scenario) -> np.ndarray:
    """Share of each state-contingent task owned at the outset, shape (N, M, S).

    Entry (n, m, s) is the certainty equivalent of agent n's own single
    arrival (full share of it, valued with agent n's rho), normalized by the
    column total so each (m, s) market sums to 1.
    """
    n, m, s = scn.rho.shape
    q = np.empty((n, m, s))
    for i in range(n):
        for j in range(m):
            for k in range(s):
                q[i, j, k] = ce_generic(
                    float(scn.rho[i, j, k]),
                    scn.arrivals[i][j][k],
                    1.0,
                    seed=derive_seed(scn.seed, "endowment", i, j, k),
                )
    totals = q.sum(axis=0)
    for j in range(m):
        for k in range(s):
            if totals[j, k] <= 0:
                raise ScenarioError(f"empty market for task ({j}, {k}): no positive endowment")
    return q / totals


def market_clearing_gap(shares: np.ndarray) -> float:
    """Largest deviation of any (task, state) column sum from 1."""
    return float(np.max(np.abs(shares.sum(axis=0) - 1.0)))


# ---------------------------------------------------------------------------
# built-in scenarios

def _general_example() -> Scenario:
    # performance indices, [task][agent] per state
    state1 = [
        [0.80, 0.34, 0.72, 0.42],
        [0.21, 0.68, 0.22, 0.78],
        [0.26, 0.19, 0.65, 0.71],
    ]
    state2 = [
        [0.90, 0.70, 0.74, 0.90],
        [0.89, 0.19, 0.50, 0.61],
        [0.33, 0.20, 0.48, 0.62],
    ]
    state3 = [
        [0.86, 0.21, 0.19, 0.98],
        [0.81, 0.24, 0.49, 0.71],
        [0.88, 0.89, 0.21, 0.50],
    ]
    rho = np.empty((4, 3, 3))
    for s, table in enumerate((state1, state2, state3)):
        for m in range(3):
            for n in range(4):
                rho[n, m, s] = table[m][n]
    # every arrival is exponential with rate equal to the 1-based agent index
    specs = tuple(
        tuple(tuple(arr.exponential(float(n + 1)) for _ in range(3)) for _ in range(3))
        for n in range(4)
    )
    beliefs = np.array(
        [
            [0.10, 0.30, 0.60],
            [0.20, 0.50, 0.30],
            [0.34, 0.33, 0.33],
            [0.90, 0.05, 0.05],
        ]
    )
    return Scenario(rho=rho, arrivals=specs, beliefs=beliefs, seed=0, name="general-example")


def _toy_sbs() -> Scenario:
    # task 0 = transmission (state-independent rho), task 1 = computation
    rho = np.empty((2, 2, 2))
    rho[0, 0, :] = 0.9
    rho[1, 0, :] = 0.7
    rho[0, 1, 0], rho[0, 1, 1] = 0.9, 0.1
    rho[1, 1, 0], rho[1, 1, 1] = 0.4, 0.6
    specs = tuple(
        tuple(tuple(arr.exponential(1.0) for _ in range(2)) for _ in range(2))
        for _ in range(2)
    )
    beliefs = np.array([[0.2, 0.8], [0.4, 0.6]])
    return Scenario(rho=rho, arrivals=specs, beliefs=beliefs, seed=0, name="toy-sbs")


def builtin_scenario(name: str) -> Scenario:
    if name == "general-example":
        return validate_scenario(_general_example())
    if name == "toy-sbs":
        return validate_scenario(_toy_sbs())
    raise ScenarioError(f"unknown scenario {name!r}; built-ins are {', '.join(BUILTIN_NAMES)}")


# ---------------------------------------------------------------------------
# JSON document form: {"agents": [{"rho": [[...]], "arrival": [[...]],
# "beliefs": [...]}], "states": S, "tasks": M, "seed": int}

def scenario_to_dict(scn: Scenario) -> dict:
    n, m, s = scn.rho.shape
    agents = []
    for i in range(n):
        agents.append(
            {
                "rho": [[float(scn.rho[i, j, k]) for k in range(s)] for j in range(m)],
                "arrival": [
                    [scn.arrivals[i][j][k].to_json() for k in range(s)] for j in range(m)
                ],
                "beliefs": [float(b) for b in scn.beliefs[i]],
            }
        )
    return {"agents": agents, "states": s, "tasks": m, "seed": int(scn.seed)}


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        agents = doc["agents"]
        n_states = int(doc["states"])
        n_tasks = int(doc["tasks"])
        seed = int(doc.get("seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"scenario document missing or malformed field: {exc}") from exc
    if not isinstance(agents, list) or not agents:
        raise ScenarioError("scenario document needs a nonempty 'agents' list")

    n = len(agents)
    rho = np.empty((n, n_tasks, n_states))
    beliefs = np.empty((n, n_states))
    specs: list = []
    for i, agent in enumerate(agents):
        for field in ("rho", "arrival", "beliefs"):
            if field not in agent:
                raise ScenarioError(f"agent {i} is missing field '{field}'")
        try:
            rho[i] = np.asarray(agent["rho"], dtype=float).reshape(n_tasks, n_states)
        except ValueError as exc:
            raise ScenarioError(
                f"agent {i} field 'rho' must be a {n_tasks}x{n_states} array: {exc}"
            ) from exc
        try:
            beliefs[i] = np.asarray(agent["beliefs"], dtype=float).reshape(n_states)
        except ValueError as exc:
            raise ScenarioError(
                f"agent {i} field 'beliefs' must have {n_states} entries: {exc}"
            ) from exc
        rows = agent["arrival"]
        if len(rows) != n_tasks or any(len(row) != n_states for row in rows):
            raise ScenarioError(f"agent {i} field 'arrival' must be {n_tasks}x{n_states}")
        try:
            specs.append(
                tuple(tuple(ArrivalSpec.from_json(cell) for cell in row) for row in rows)
            )
        except ValueError as exc:
            raise ScenarioError(f"agent {i} field 'arrival': {exc}") from exc

    return validate_scenario(
        Scenario(rho=rho, arrivals=tuple(specs), beliefs=beliefs, seed=seed)
    )


def load_scenario(path_or_name: str) -> Scenario:
    """Resolve a built-in name or read and validate a scenario JSON file."""
    if path_or_name in BUILTIN_NAMES:
        return builtin_scenario(path_or_name)
    path = Path(path_or_name)
    if not path.exists():
        raise ScenarioError(
            f"unknown scenario {path_or_name!r}: not a built-in "
            f"({', '.join(BUILTIN_NAMES)}) and no such file"
        )
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"could not parse {path}: {exc}") from exc
    scn = scenario_from_dict(doc)
    scn.name = str(path)
    return scn
