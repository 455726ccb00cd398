"""Command-line client for the market service.

Each invocation talks HTTP: by default it mounts the service in-process
over a test transport, and --server points the identical client at a
running instance instead. Scenario files are parsed and validated locally,
then sent inline, so a remote server never needs the file.

Outputs are CSV files plus a manifest.json in the output directory
(--out, else $TASKMARKET_OUT, else ./out). Exit codes: 0 success,
1 invalid input, 2 auction did not converge, 64 usage error.
"""
from __future__ import annotations

import argparse
import os
import sys
import warnings
from pathlib import Path

import httpx

from .reports import (
    RunManifest,
    write_efficiency_csv,
    write_indifference_csv,
    write_manifest,
    write_prices_csv,
    write_shares_csv,
    write_ssc_csv,
    write_trace_csv,
    write_utilities_csv,
    write_welfare_csv,
)
from .scenario import ScenarioError, load_scenario, scenario_to_dict

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NO_CONVERGENCE = 2
EXIT_USAGE = 64

DEFAULT_DRAWS = 100_000


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which collides with the
    # non-convergence code; usage problems get 64 instead
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument(
        "--scenario",
        default="general-example",
        help="built-in name (general-example, toy-sbs) or path to a scenario JSON file",
    )
    common.add_argument("--alpha", type=float, default=0.01, help="price step size")
    common.add_argument(
        "--epsilon", type=float, default=0.01, help="max |excess demand| to stop at"
    )
    common.add_argument("--max-iters", type=int, default=10_000)
    common.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Monte Carlo / random-baseline seed (default: the scenario's own seed)",
    )
    common.add_argument(
        "--out", default=None, help="output directory (default: $TASKMARKET_OUT or ./out)"
    )
    common.add_argument(
        "--draws", type=int, default=DEFAULT_DRAWS, help="arrival draws for simulate"
    )
    common.add_argument(
        "--server",
        default=None,
        metavar="URL",
        help="send requests to a running service instead of solving in-process",
    )

    parser = _Parser(prog="taskmarket", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], help="run the price auction to clearing")
    sub.add_parser(
        "core-check", parents=[common], help="test the market allocation for blocking coalitions"
    )
    sub.add_parser(
        "baselines", parents=[common], help="compare welfare against baseline allocations"
    )
    sub.add_parser(
        "simulate", parents=[common], help="replay the allocation against sampled arrivals"
    )
    sub.add_parser(
        "reproduce", parents=[common], help="solve, core-check, baselines, and simulate in one run"
    )
    return parser


def _open_client(server: str | None) -> httpx.Client:
    if server is not None:
        return httpx.Client(base_url=server.rstrip("/"), timeout=600.0)
    # in-process: same client API, requests served by the ASGI app directly
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # the bundled test client warns on import
        from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    try:
        resp = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        raise CliError(f"request to {path} failed: {exc}") from exc
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise CliError(str(detail))
    return resp.json()


def _wrote(path: Path) -> None:
    print(f"wrote {path}")


def _do_solve(client, out: Path, doc: dict, params: dict, seed: int, args) -> int:
    data = _post(client, "/solve", {"scenario": doc, "params": params, "include_trace": True})
    _wrote(write_trace_csv(out / "trace.csv", data["trace"]))
    _wrote(write_prices_csv(out / "prices.csv", data["prices"], data["raw_prices"]))
    _wrote(write_shares_csv(out / "shares.csv", data["shares"]))
    _wrote(write_utilities_csv(out / "utilities.csv", data["expected_utilities"]))
    if not data["converged"]:
        print(
            f"auction stopped after {data['iterations']} iterations with "
            f"max |z| = {data['max_abs_z']:.6g} > epsilon",
            file=sys.stderr,
        )
        return EXIT_NO_CONVERGENCE
    print(
        f"converged in {data['iterations']} iterations, "
        f"max |z| = {data['max_abs_z']:.6g}"
    )
    return EXIT_OK


def _do_core_check(client, out: Path, doc: dict, params: dict, seed: int, args) -> int:
    data = _post(client, "/core-check", {"scenario": doc, "params": params})
    if not data["converged"]:
        print("auction did not converge; core check not run", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    rep = data["report"]
    rows = [
        (r["coalition"], r["target"], r["mode"], float(r["improvement"]))
        for r in rep["rows"]
    ]
    _wrote(write_ssc_csv(out / "ssc.csv", rows))
    if rep["verdict"]:
        print("allocation is in the strong sequential core (no blocking coalition)")
    else:
        worst = rep["worst_offender"]
        where = (
            f"; worst: coalition {worst['coalition']} target {worst['target']} "
            f"{worst['mode']} improvement {float(worst['improvement']):.6g}"
            if worst
            else ""
        )
        print(f"allocation is NOT certified: blocked or inconclusive{where}")
    return EXIT_OK


def _do_baselines(client, out: Path, doc: dict, params: dict, seed: int, args) -> int:
    data = _post(client, "/baselines", {"scenario": doc, "params": params, "seed": seed})
    if not data["converged"]:
        print("auction did not converge; baselines not compared", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    _wrote(write_welfare_csv(out / "fig9_welfare.csv", data["welfare"], data["per_agent"]))
    _wrote(write_efficiency_csv(out / "fig5_efficiency.csv", data["efficiency"]))
    ranked = sorted(data["welfare"].items(), key=lambda kv: -kv[1])
    print("welfare: " + ", ".join(f"{k}={v:.6g}" for k, v in ranked))
    return EXIT_OK


def _do_simulate(client, out: Path, doc: dict, params: dict, seed: int, args) -> int:
    payload = {"scenario": doc, "params": params, "draws": args.draws, "seed": seed}
    data = _post(client, "/simulate", payload)
    if not data["converged"]:
        print("auction did not converge; nothing to simulate", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    _wrote(
        write_indifference_csv(
            out / "fig4_indifference.csv",
            data["realized"],
            data["stderr"],
            data["predicted"],
        )
    )
    print(f"simulated {data['draws']} arrival draws per agent")
    return EXIT_OK


def _do_reproduce(client, out: Path, doc: dict, params: dict, seed: int, args) -> int:
    for step in (_do_solve, _do_core_check, _do_baselines, _do_simulate):
        code = step(client, out, doc, params, seed, args)
        if code != EXIT_OK:
            return code
    return EXIT_OK


_HANDLERS = {
    "solve": _do_solve,
    "core-check": _do_core_check,
    "baselines": _do_baselines,
    "simulate": _do_simulate,
    "reproduce": _do_reproduce,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # remapped usage errors and --help
        return int(exc.code or 0)

    try:
        scn = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    doc = scenario_to_dict(scn)
    seed = args.seed if args.seed is not None else int(doc["seed"])
    out = Path(args.out or os.environ.get("TASKMARKET_OUT") or "out")
    params = {"alpha": args.alpha, "epsilon": args.epsilon, "max_iters": args.max_iters}
    needs_draws = args.subcommand in ("simulate", "reproduce")

    client = _open_client(args.server)
    try:
        code = _HANDLERS[args.subcommand](client, out, doc, params, seed, args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    finally:
        client.close()

    # the manifest accompanies every output set, including non-converged ones
    _wrote(
        write_manifest(
            out / "manifest.json",
            RunManifest(
                scenario=args.scenario,
                subcommand=args.subcommand,
                alpha=args.alpha,
                epsilon=args.epsilon,
                max_iters=args.max_iters,
                seed=seed,
                draws=args.draws if needs_draws else None,
                out_dir=str(out),
            ),
        )
    )
    return code


if __name__ == "__main__":
    raise SystemExit(main())
