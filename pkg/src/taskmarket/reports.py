"""Artifact persistence: CSV files with fixed layouts and a run manifest.

Every writer takes plain data (lists, dicts, arrays) rather than domain
objects, so the command-line client can feed it decoded JSON directly.
All writers are deterministic: fixed row order, floats at 12 significant
digits, LF line endings. Identical inputs produce byte-identical files,
which is the reproducibility contract the manifest records.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__


def format_float(x: float) -> str:
    """12 significant digits; infinities spelled out."""
    x = float(x)
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return f"{x:.12g}"


def write_csv(path: Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(c) if isinstance(c, float) else c for c in row]
            )
    return path


def price_columns(n_tasks: int, n_states: int) -> list[str]:
    return [
        f"price_task{m}_state{s}" for m in range(n_tasks) for s in range(n_states)
    ]


def write_trace_csv(path: Path, trace: list[dict]) -> Path:
    """Iteration trace: iter, max_abs_z, then one column per (task, state).

    Each entry carries "iteration", "max_abs_z", and "prices" as a
    task-major nested list.
    """
    if not trace:
        raise ValueError("trace has no rows")
    prices0 = trace[0]["prices"]
    m, s = len(prices0), len(prices0[0])
    header = ["iter", "max_abs_z"] + price_columns(m, s)
    rows = [
        [int(row["iteration"]), float(row["max_abs_z"])]
        + [float(row["prices"][mi][si]) for mi in range(m) for si in range(s)]
        for row in trace
    ]
    return write_csv(path, header, rows)


def write_prices_csv(path: Path, prices, raw_prices) -> Path:
    prices = np.asarray(prices, dtype=float)
    raw = np.asarray(raw_prices, dtype=float)
    header = ["task", "state", "price", "raw_price"]
    rows = [
        [mi, si, float(prices[mi, si]), float(raw[mi, si])]
        for mi in range(prices.shape[0])
        for si in range(prices.shape[1])
    ]
    return write_csv(path, header, rows)


def write_shares_csv(path: Path, shares) -> Path:
    shares = np.asarray(shares, dtype=float)
    n, m, s = shares.shape
    header = ["agent", "task", "state", "share"]
    rows = [
        [i, mi, si, float(shares[i, mi, si])]
        for i in range(n)
        for mi in range(m)
        for si in range(s)
    ]
    return write_csv(path, header, rows)


def write_utilities_csv(path: Path, utilities) -> Path:
    header = ["agent", "expected_utility"]
    rows = [[i, float(u)] for i, u in enumerate(utilities)]
    return write_csv(path, header, rows)


def write_ssc_csv(path: Path, rows) -> Path:
    """Blocking programs: coalition bitmask, target agent, mode, improvement.

    Rows are (coalition, target, mode, improvement); improvement may arrive
    as the string "-inf" from a JSON payload and is coerced through float.
    """
    header = ["coalition", "target", "mode", "improvement"]
    out = [[int(c), int(t), str(mode), float(v)] for c, t, mode, v in rows]
    return write_csv(path, header, out)


def write_indifference_csv(path: Path, realized, stderr, predicted) -> Path:
    header = ["agent", "realized_mean", "stderr", "ce_predicted", "ratio"]
    rows = []
    for i, (r, se, p) in enumerate(zip(realized, stderr, predicted)):
        ratio = float(r) / float(p) if float(p) != 0.0 else math.nan
        rows.append([i, float(r), float(se), float(p), ratio])
    return write_csv(path, header, rows)


def write_efficiency_csv(path: Path, rows) -> Path:
    """Rows are (agent, task, state, relative index, share)."""
    header = ["agent", "task", "state", "relative_index", "share"]
    out = [[int(a), int(m), int(s), float(ri), float(sh)] for a, m, s, ri, sh in rows]
    return write_csv(path, header, out)


def write_welfare_csv(path: Path, welfare: dict, per_agent: dict) -> Path:
    methods = list(welfare)
    n = len(next(iter(per_agent.values()))) if methods else 0
    header = ["method", "welfare"] + [f"utility_agent{i}" for i in range(n)]
    rows = [
        [method, float(welfare[method])] + [float(u) for u in per_agent[method]]
        for method in methods
    ]
    return write_csv(path, header, rows)


@dataclass
class RunManifest:
    """Everything needed to reproduce an output set bit for bit."""

    scenario: str
    subcommand: str
    alpha: float
    epsilon: float
    max_iters: int
    seed: int
    draws: int | None
    out_dir: str
    version: str = __version__


def write_manifest(path: Path, manifest: RunManifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")
    return path
