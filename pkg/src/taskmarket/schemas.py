"""Request and response models for the HTTP service.

The wire format mirrors the scenario JSON document: agents carry per-task,
per-state efficiency indices, arrival specs, and a belief row. Every
endpoint accepts either an inline scenario or the name of a built-in.
"""
from __future__ import annotations

import math

from pydantic import BaseModel, Field, field_serializer, model_validator

from .scenario import Scenario, scenario_from_dict, scenario_to_dict


class ArrivalModel(BaseModel):
    kind: str
    rate: float | None = None
    mean: float | None = None
    stddev: float | None = None
    value: float | None = None

    model_config = {"extra": "forbid"}


class AgentModel(BaseModel):
    rho: list[list[float]]  # [task][state]
    arrival: list[list[ArrivalModel]]  # [task][state]
    beliefs: list[float]

    model_config = {"extra": "forbid"}


class ScenarioModel(BaseModel):
    agents: list[AgentModel]
    tasks: int
    states: int
    seed: int = 0

    model_config = {"extra": "forbid"}

    def to_scenario(self) -> Scenario:
        return scenario_from_dict(self.model_dump())

    @classmethod
    def from_scenario(cls, scn: Scenario) -> "ScenarioModel":
        return cls.model_validate(scenario_to_dict(scn))


class AuctionParams(BaseModel):
    alpha: float = 0.01
    epsilon: float = 0.01
    max_iters: int = 10_000
    initial_prices: list[list[float]] | None = None  # [task][state]

    model_config = {"extra": "forbid"}


class ScenarioRef(BaseModel):
    """Exactly one of `name` (a built-in) or `scenario` (inline document)."""

    name: str | None = None
    scenario: ScenarioModel | None = None

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def _exactly_one_source(self):
        if (self.name is None) == (self.scenario is None):
            raise ValueError("provide exactly one of 'name' or 'scenario'")
        return self


class SolveRequest(ScenarioRef):
    params: AuctionParams = Field(default_factory=AuctionParams)
    include_trace: bool = False


class TraceRowModel(BaseModel):
    iteration: int
    max_abs_z: float
    prices: list[list[float]]  # [task][state]


class SolveResponse(BaseModel):
    converged: bool
    iterations: int
    max_abs_z: float
    prices: list[list[float]]  # normalized, [task][state]
    raw_prices: list[list[float]]
    shares: list[list[list[float]]]  # [agent][task][state]
    expected_utilities: list[float]
    trace: list[TraceRowModel] | None = None


class CoreCheckRequest(ScenarioRef):
    params: AuctionParams = Field(default_factory=AuctionParams)
    shares: list[list[list[float]]] | None = None  # check these instead of solving
    tol: float = 1e-6
    clearing_tol: float = 0.02


class BlockingRow(BaseModel):
    coalition: int
    target: int
    mode: str
    improvement: float

    # JSON has no -Infinity literal; send non-finite values as strings.
    # Validation accepts them back because float("-inf") parses.
    @field_serializer("improvement")
    def _json_safe(self, v: float):
        return v if math.isfinite(v) else str(v)


class CoreReportModel(BaseModel):
    verdict: bool
    weak_blocked: bool
    strong_blocked: bool
    market_clearing_gap: float
    tol: float
    worst_offender: BlockingRow | None
    inconclusive: list[tuple[int, int, str]]
    # one row per blocking program, in canonical report order:
    # (coalition, target) ascending, ex-ante before the per-state programs
    rows: list[BlockingRow]


class CoreCheckResponse(BaseModel):
    converged: bool  # True when shares were supplied directly
    report: CoreReportModel | None  # None iff the auction failed to converge


class BaselinesRequest(ScenarioRef):
    params: AuctionParams = Field(default_factory=AuctionParams)
    seed: int | None = None  # random-split seed; defaults to the scenario seed


class BaselinesResponse(BaseModel):
    converged: bool
    welfare: dict[str, float] | None
    per_agent: dict[str, list[float]] | None
    # (agent, task, state, relative index, share) under the market allocation
    efficiency: list[tuple[int, int, int, float, float]] | None


class SimulateRequest(ScenarioRef):
    params: AuctionParams = Field(default_factory=AuctionParams)
    draws: int = 100_000
    seed: int | None = None  # defaults to the scenario seed
    shares: list[list[list[float]]] | None = None  # simulate these instead of solving


class SimulateResponse(BaseModel):
    converged: bool  # True when shares were supplied directly
    realized: list[float] | None
    stderr: list[float] | None
    predicted: list[float] | None
    per_state_realized: list[list[float]] | None
    shares: list[list[list[float]]] | None
    draws: int
