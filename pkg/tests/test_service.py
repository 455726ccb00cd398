"""HTTP endpoint behavior: payload shapes, error mapping, parity with the library."""
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from taskmarket import __version__, builtin_scenario, run_auction, scenario_to_dict
from taskmarket.auction import AuctionConfig
from taskmarket.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def toy_doc():
    return scenario_to_dict(builtin_scenario("toy-sbs"))


def test_health_reports_version(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok", "version": __version__}


def test_scenario_listing(client):
    resp = client.get("/scenarios")
    assert resp.status_code == 200
    assert resp.json()["scenarios"] == ["general-example", "toy-sbs"]


def test_scenario_detail_round_trips(client):
    resp = client.get("/scenarios/toy-sbs")
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["tasks"] == 2 and doc["states"] == 2
    assert len(doc["agents"]) == 2
    assert doc["agents"][0]["rho"][0] == [0.9, 0.9]


def test_unknown_scenario_is_404(client):
    assert client.get("/scenarios/nope").status_code == 404


class TestSolve:
    def test_by_name_matches_library(self, client):
        resp = client.post(
            "/solve",
            json={"name": "toy-sbs", "params": {"alpha": 0.05, "epsilon": 1e-4}},
        )
        assert resp.status_code == 200
        data = resp.json()
        assert data["converged"] is True
        report = run_auction(
            builtin_scenario("toy-sbs"), AuctionConfig(alpha=0.05, epsilon=1e-4)
        )
        assert data["iterations"] == report.iterations
        # JSON floats round-trip exactly, so parity is bitwise
        assert np.array_equal(np.asarray(data["shares"]), report.shares)
        assert np.array_equal(np.asarray(data["prices"]), report.prices)
        assert data["trace"] is None

    def test_inline_scenario_and_trace(self, client, toy_doc):
        resp = client.post(
            "/solve",
            json={
                "scenario": toy_doc,
                "params": {"alpha": 0.05, "epsilon": 1e-4},
                "include_trace": True,
            },
        )
        assert resp.status_code == 200
        data = resp.json()
        trace = data["trace"]
        assert trace[0]["iteration"] == 0
        assert trace[-1]["max_abs_z"] == data["max_abs_z"]
        assert len(trace) == data["iterations"] + 1
        assert len(trace[0]["prices"]) == 2 and len(trace[0]["prices"][0]) == 2

    def test_non_convergence_flag(self, client):
        resp = client.post(
            "/solve",
            json={"name": "toy-sbs", "params": {"epsilon": 1e-9, "max_iters": 3}},
        )
        assert resp.status_code == 200
        data = resp.json()
        assert data["converged"] is False
        assert data["iterations"] == 3

    def test_bad_alpha_is_400(self, client):
        resp = client.post("/solve", json={"name": "toy-sbs", "params": {"alpha": -1}})
        assert resp.status_code == 400
        assert "alpha must be" in resp.json()["detail"]

    def test_name_and_scenario_together_rejected(self, client, toy_doc):
        resp = client.post("/solve", json={"name": "toy-sbs", "scenario": toy_doc})
        assert resp.status_code == 422

    def test_neither_name_nor_scenario_rejected(self, client):
        assert client.post("/solve", json={}).status_code == 422

    def test_unknown_builtin_is_400(self, client):
        resp = client.post("/solve", json={"name": "missing"})
        assert resp.status_code == 400
        assert "unknown scenario" in resp.json()["detail"]

    def test_malformed_inline_scenario_is_400(self, client, toy_doc):
        doc = {**toy_doc, "agents": [{**toy_doc["agents"][0], "beliefs": [0.5, 0.6]}]
               + toy_doc["agents"][1:]}
        resp = client.post("/solve", json={"scenario": doc})
        assert resp.status_code == 400


class TestCoreCheck:
    def test_toy_equilibrium_certified(self, client):
        resp = client.post(
            "/core-check",
            json={"name": "toy-sbs", "params": {"alpha": 0.05, "epsilon": 1e-4}},
        )
        assert resp.status_code == 200
        data = resp.json()
        assert data["converged"] is True
        rep = data["report"]
        assert rep["verdict"] is True
        assert rep["weak_blocked"] is False
        assert rep["inconclusive"] == []
        # 3 coalitions x up to 2 targets, ex-ante + 2 states each
        modes = {r["mode"] for r in rep["rows"]}
        assert modes == {"ex-ante", "ex-post-0", "ex-post-1"}
        singles = [r for r in rep["rows"] if r["coalition"] in (1, 2)]
        assert all(float(r["improvement"]) <= 1e-6 for r in singles)

    def test_supplied_shares_skip_the_auction(self, client):
        scn = builtin_scenario("toy-sbs")
        report = run_auction(scn, AuctionConfig(alpha=0.05, epsilon=1e-4))
        resp = client.post(
            "/core-check",
            json={"name": "toy-sbs", "shares": report.shares.tolist()},
        )
        assert resp.status_code == 200
        assert resp.json()["report"]["verdict"] is True

    def test_non_clearing_shares_fail_the_verdict(self, client):
        bad = np.full((2, 2, 2), 0.25).tolist()
        resp = client.post("/core-check", json={"name": "toy-sbs", "shares": bad})
        assert resp.status_code == 200
        rep = resp.json()["report"]
        assert rep["verdict"] is False
        assert rep["market_clearing_gap"] == pytest.approx(0.5)
        assert rep["rows"] == []

    def test_wrong_shape_rejected(self, client):
        resp = client.post(
            "/core-check", json={"name": "toy-sbs", "shares": [[[0.5, 0.5]]]}
        )
        assert resp.status_code == 400
        assert "shape" in resp.json()["detail"]

    def test_auction_failure_reported_in_body(self, client):
        resp = client.post(
            "/core-check",
            json={"name": "toy-sbs", "params": {"epsilon": 1e-9, "max_iters": 2}},
        )
        assert resp.status_code == 200
        data = resp.json()
        assert data["converged"] is False
        assert data["report"] is None


class TestBaselines:
    def test_welfare_table(self, client):
        resp = client.post(
            "/baselines",
            json={"name": "toy-sbs", "params": {"alpha": 0.05, "epsilon": 1e-4}},
        )
        assert resp.status_code == 200
        data = resp.json()
        assert data["converged"] is True
        w = data["welfare"]
        assert set(w) == {"Walrasian", "WeightedMatching", "Random", "Equal"}
        assert w["Walrasian"] >= max(w["WeightedMatching"], w["Random"], w["Equal"])
        for agents in data["per_agent"].values():
            assert len(agents) == 2
        # 2 agents x 2 tasks x 2 states rows of (agent, task, state, index, share)
        assert len(data["efficiency"]) == 8
        assert all(len(row) == 5 for row in data["efficiency"])

    def test_seed_changes_random_baseline_only(self, client):
        def welfare(seed):
            resp = client.post(
                "/baselines",
                json={
                    "name": "toy-sbs",
                    "params": {"alpha": 0.05, "epsilon": 1e-4},
                    "seed": seed,
                },
            )
            return resp.json()["welfare"]

        a, b = welfare(1), welfare(2)
        assert a["Random"] != b["Random"]
        assert a["Walrasian"] == b["Walrasian"]
        assert a["Equal"] == b["Equal"]


class TestSimulate:
    def test_predicted_matches_realized_with_supplied_shares(self, client):
        scn = builtin_scenario("toy-sbs")
        report = run_auction(scn, AuctionConfig(alpha=0.05, epsilon=1e-4))
        resp = client.post(
            "/simulate",
            json={
                "name": "toy-sbs",
                "shares": report.shares.tolist(),
                "draws": 20_000,
                "seed": 5,
            },
        )
        assert resp.status_code == 200
        data = resp.json()
        assert data["converged"] is True
        assert data["draws"] == 20_000
        for r, p, se in zip(data["realized"], data["predicted"], data["stderr"]):
            assert math.isfinite(se) and se > 0
            assert abs(r - p) < 4 * se

    def test_zero_draws_rejected(self, client):
        resp = client.post("/simulate", json={"name": "toy-sbs", "draws": 0})
        assert resp.status_code == 400

    def test_same_seed_same_numbers(self, client):
        payload = {"name": "toy-sbs", "params": {"alpha": 0.05}, "draws": 1000, "seed": 3}
        a = client.post("/simulate", json=payload).json()
        b = client.post("/simulate", json=payload).json()
        assert a == b


def test_unknown_route_is_404(client):
    assert client.post("/nope", json={}).status_code == 404
