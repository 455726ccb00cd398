"""Stochastic specifications of initial task loads.

Each agent/task/state cell carries one arrival distribution describing the
load that originates there. Four kinds are supported: exponential (the main
model), poisson, normal truncated at zero, and deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

EXPONENTIAL = "exponential"
POISSON = "poisson"
TRUNCATED_NORMAL = "truncated-normal"
DETERMINISTIC = "deterministic"

_KINDS = (EXPONENTIAL, POISSON, TRUNCATED_NORMAL, DETERMINISTIC)


@dataclass(frozen=True)
class ArrivalSpec:
    """Distribution of one initial load q.

    Exactly the parameters for `kind` are meaningful: `rate` for exponential
    and poisson, `mean`/`stddev` for truncated-normal, `value` for
    deterministic. Use the module-level constructors rather than filling
    fields by hand.
    """

    kind: str
    rate: float | None = None
    mean: float | None = None
    stddev: float | None = None
    value: float | None = None

    def validate(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unsupported arrival kind {self.kind!r}")
        if self.kind in (EXPONENTIAL, POISSON):
            if self.rate is None or not np.isfinite(self.rate) or self.rate <= 0:
                raise ValueError(f"{self.kind} arrival requires rate > 0, got {self.rate!r}")
        elif self.kind == TRUNCATED_NORMAL:
            if self.mean is None or not np.isfinite(self.mean) or self.mean <= 0:
                raise ValueError(f"truncated-normal arrival requires mean > 0, got {self.mean!r}")
            if self.stddev is None or not np.isfinite(self.stddev) or self.stddev <= 0:
                raise ValueError(
                    f"truncated-normal arrival requires stddev > 0, got {self.stddev!r}"
                )
        else:
            if self.value is None or not np.isfinite(self.value) or self.value < 0:
                raise ValueError(f"deterministic arrival requires value >= 0, got {self.value!r}")

    def positive_mass(self) -> bool:
        """True when the load is strictly positive with positive probability."""
        if self.kind == DETERMINISTIC:
            return bool(self.value is not None and self.value > 0)
        return True

    def mean_load(self) -> float:
        if self.kind == EXPONENTIAL:
            return 1.0 / float(self.rate)
        if self.kind == POISSON:
            return float(self.rate)
        if self.kind == DETERMINISTIC:
            return float(self.value)
        # left-truncated normal mean: mu + sigma * phi(a) / (1 - Phi(a)), a = -mu/sigma
        mu, sigma = float(self.mean), float(self.stddev)
        a = -mu / sigma
        phi_a = np.exp(-0.5 * a * a) / np.sqrt(2.0 * np.pi)
        return mu + sigma * phi_a / ndtr(-a)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == EXPONENTIAL:
            return rng.exponential(1.0 / float(self.rate), size)
        if self.kind == POISSON:
            return rng.poisson(float(self.rate), size).astype(np.float64)
        if self.kind == DETERMINISTIC:
            return np.full(size, float(self.value))
        # inverse-CDF sampling of the normal conditioned on q > 0
        mu, sigma = float(self.mean), float(self.stddev)
        lo = ndtr(-mu / sigma)
        u = rng.uniform(size=size)
        return mu + sigma * ndtri(lo + u * (1.0 - lo))

    def to_json(self) -> dict:
        if self.kind in (EXPONENTIAL, POISSON):
            return {"kind": self.kind, "rate": float(self.rate)}
        if self.kind == TRUNCATED_NORMAL:
            return {"kind": self.kind, "mean": float(self.mean), "stddev": float(self.stddev)}
        return {"kind": self.kind, "value": float(self.value)}

    @staticmethod
    def from_json(doc: dict) -> "ArrivalSpec":
        if not isinstance(doc, dict) or "kind" not in doc:
            raise ValueError(f"arrival entry must be an object with a 'kind' field, got {doc!r}")
        spec = ArrivalSpec(
            kind=doc["kind"],
            rate=doc.get("rate"),
            mean=doc.get("mean"),
            stddev=doc.get("stddev"),
            value=doc.get("value"),
        )
        spec.validate()
        return spec


def exponential(rate: float) -> ArrivalSpec:
    spec = ArrivalSpec(kind=EXPONENTIAL, rate=float(rate))
    spec.validate()
    return spec


def poisson(rate: float) -> ArrivalSpec:
    spec = ArrivalSpec(kind=POISSON, rate=float(rate))
    spec.validate()
    return spec


def truncated_normal(mean: float, stddev: float) -> ArrivalSpec:
    spec = ArrivalSpec(kind=TRUNCATED_NORMAL, mean=float(mean), stddev=float(stddev))
    spec.validate()
    return spec


def deterministic(value: float) -> ArrivalSpec:
    spec = ArrivalSpec(kind=DETERMINISTIC, value=float(value))
    spec.validate()
    return spec
