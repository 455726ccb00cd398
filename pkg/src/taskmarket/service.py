"""HTTP facade over the market library.

Endpoints accept a built-in scenario name or an inline scenario document,
run the requested computation in-process, and return JSON. Failure to
converge is reported in the response body, not as an HTTP error, so
clients can distinguish it from bad input.
"""
from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from . import __version__
from .auction import AuctionConfig, run_auction
from .baselines import (
    METHOD_WALRASIAN,
    BaselineAllocation,
    efficiency_share_table,
    equal_allocation,
    random_allocation,
    simulate_realized_utilities,
    weighted_matching_allocation,
    welfare_report,
)
from .coalitions import blocking_rows, check_ssc
from .scenario import BUILTIN_NAMES, Scenario, ScenarioError, builtin_scenario
from .schemas import (
    BaselinesRequest,
    BaselinesResponse,
    BlockingRow,
    CoreCheckRequest,
    CoreCheckResponse,
    CoreReportModel,
    ScenarioModel,
    ScenarioRef,
    SimulateRequest,
    SimulateResponse,
    SolveRequest,
    SolveResponse,
    TraceRowModel,
)


def _resolve_scenario(ref: ScenarioRef) -> Scenario:
    try:
        if ref.name is not None:
            return builtin_scenario(ref.name)
        return ref.scenario.to_scenario()
    except ScenarioError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _auction_config(params) -> AuctionConfig:
    initial = None
    if params.initial_prices is not None:
        initial = np.asarray(params.initial_prices, dtype=float)
    return AuctionConfig(
        alpha=params.alpha,
        epsilon=params.epsilon,
        max_iters=params.max_iters,
        initial_prices=initial,
    )


def _run(scn: Scenario, params):
    try:
        return run_auction(scn, _auction_config(params))
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _shares_array(scn: Scenario, shares) -> np.ndarray:
    arr = np.asarray(shares, dtype=float)
    if arr.shape != scn.rho.shape:
        raise HTTPException(
            status_code=400,
            detail=f"shares must have shape {scn.rho.shape}, got {arr.shape}",
        )
    return arr


def create_app() -> FastAPI:
    app = FastAPI(title="taskmarket", version=__version__)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.get("/scenarios")
    def scenarios() -> dict:
        return {"scenarios": list(BUILTIN_NAMES)}

    @app.get("/scenarios/{name}")
    def scenario_by_name(name: str) -> ScenarioModel:
        if name not in BUILTIN_NAMES:
            raise HTTPException(status_code=404, detail=f"unknown scenario {name!r}")
        return ScenarioModel.from_scenario(builtin_scenario(name))

    @app.post("/solve")
    def solve(req: SolveRequest) -> SolveResponse:
        scn = _resolve_scenario(req)
        report = _run(scn, req.params)
        trace = None
        if req.include_trace:
            trace = [
                TraceRowModel(
                    iteration=row.iteration,
                    max_abs_z=row.max_abs_z,
                    prices=row.prices.tolist(),
                )
                for row in report.trace
            ]
        return SolveResponse(
            converged=report.converged,
            iterations=report.iterations,
            max_abs_z=report.trace[-1].max_abs_z,
            prices=report.prices.tolist(),
            raw_prices=report.raw_prices.tolist(),
            shares=report.shares.tolist(),
            expected_utilities=report.per_agent_expected_utility.tolist(),
            trace=trace,
        )

    @app.post("/core-check")
    def core_check(req: CoreCheckRequest) -> CoreCheckResponse:
        scn = _resolve_scenario(req)
        if req.shares is not None:
            shares = _shares_array(scn, req.shares)
        else:
            report = _run(scn, req.params)
            if not report.converged:
                return CoreCheckResponse(converged=False, report=None)
            shares = report.shares
        try:
            ssc = check_ssc(scn, shares, tol=req.tol, clearing_tol=req.clearing_tol)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        rows = [
            BlockingRow(coalition=c, target=t, mode=mode, improvement=v)
            for c, t, mode, v in blocking_rows(ssc)
        ]
        worst = None
        if ssc.worst_offender is not None:
            mask, t, mode, v = ssc.worst_offender
            worst = BlockingRow(coalition=mask, target=t, mode=mode, improvement=v)
        return CoreCheckResponse(
            converged=True,
            report=CoreReportModel(
                verdict=ssc.verdict,
                weak_blocked=ssc.weak_blocked,
                strong_blocked=ssc.strong_blocked,
                market_clearing_gap=ssc.market_clearing_gap,
                tol=ssc.tol,
                worst_offender=worst,
                inconclusive=list(ssc.inconclusive),
                rows=rows,
            ),
        )

    @app.post("/baselines")
    def baselines(req: BaselinesRequest) -> BaselinesResponse:
        scn = _resolve_scenario(req)
        report = _run(scn, req.params)
        if not report.converged:
            return BaselinesResponse(
                converged=False, welfare=None, per_agent=None, efficiency=None
            )
        seed = scn.seed if req.seed is None else req.seed
        try:
            allocations = [
                BaselineAllocation(method=METHOD_WALRASIAN, shares=report.shares),
                weighted_matching_allocation(scn),
                random_allocation(scn, seed),
                equal_allocation(scn),
            ]
            comparison = welfare_report(scn, allocations)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return BaselinesResponse(
            converged=True,
            welfare={k: float(v) for k, v in comparison.welfare.items()},
            per_agent={k: np.asarray(v).tolist() for k, v in comparison.per_agent.items()},
            efficiency=efficiency_share_table(scn, report.shares),
        )

    @app.post("/simulate")
    def simulate(req: SimulateRequest) -> SimulateResponse:
        scn = _resolve_scenario(req)
        if req.shares is not None:
            shares = _shares_array(scn, req.shares)
        else:
            report = _run(scn, req.params)
            if not report.converged:
                return SimulateResponse(
                    converged=False,
                    realized=None,
                    stderr=None,
                    predicted=None,
                    per_state_realized=None,
                    shares=None,
                    draws=req.draws,
                )
            shares = report.shares
        seed = scn.seed if req.seed is None else req.seed
        try:
            result = simulate_realized_utilities(scn, shares, req.draws, seed)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return SimulateResponse(
            converged=True,
            realized=result.realized.tolist(),
            stderr=result.stderr.tolist(),
            predicted=result.predicted.tolist(),
            per_state_realized=result.per_state_realized.tolist(),
            shares=shares.tolist(),
            draws=result.n_draws,
        )

    return app


app = create_app()
