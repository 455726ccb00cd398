"""Deterministic equivalents of stochastic task loads.

A risk-averse agent with curvature parameter rho values a random reward x at
d = -rho * ln E[exp(-x/rho)], the certain amount it would accept instead.
For a share r of a task whose total load is a sum of independent arrivals,
d splits into one term per contributing arrival. Closed forms exist for
exponential, poisson, and deterministic arrivals; normal-truncated-at-zero
terms fall back to Monte Carlo with a derived seed.

The same per-term objects also expose first and second derivatives in r,
which the demand solver and the coalition solver consume.
"""
from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from .arrivals import (
    DETERMINISTIC,
    EXPONENTIAL,
    POISSON,
    TRUNCATED_NORMAL,
    ArrivalSpec,
)
from .seeding import substream

# draw count for truncated-normal terms inside valuations; oracle calls pass
# their own n_samples explicitly
TRUNCNORM_TERM_DRAWS = 65536


def _check_rho_r(rho: float, r: float) -> None:
    if not np.isfinite(rho) or rho <= 0:
        raise ValueError(f"rho must be strictly positive and finite, got {rho!r}")
    if not np.isfinite(r) or r < 0 or r > 1:
        raise ValueError(f"share r must lie in [0, 1], got {r!r}")


def ce_exponential_load(rho: float, rates: Sequence[float], r: float) -> float:
    """Closed-form deterministic equivalent of r times a sum of exponentials.

    Each independent exponential arrival with rate lam contributes
    rho * ln(1 + r / (rho * lam)).
    """
    _check_rho_r(rho, r)
    total = 0.0
    for lam in rates:
        if not np.isfinite(lam) or lam <= 0:
            raise ValueError(f"arrival rate must be strictly positive, got {lam!r}")
        total += math.log1p(r / (rho * lam))
    return rho * total


class _ExpTerm:
    __slots__ = ("a",)

    def __init__(self, rho: float, rate: float):
        self.a = rho * rate

    def d(self, rho: float, r: float) -> float:
        return rho * math.log1p(r / self.a)

    def d1(self, rho: float, r: float) -> float:
        return rho / (self.a + r)

    def d2(self, rho: float, r: float) -> float:
        h = self.a + r
        return -rho / (h * h)

    def mean(self) -> float:
        raise NotImplementedError


class _PoissonTerm:
    __slots__ = ("rate",)

    def __init__(self, rate: float):
        self.rate = rate

    def d(self, rho: float, r: float) -> float:
        return rho * self.rate * -math.expm1(-r / rho)

    def d1(self, rho: float, r: float) -> float:
        return self.rate * math.exp(-r / rho)

    def d2(self, rho: float, r: float) -> float:
        return -self.rate / rho * math.exp(-r / rho)


class _DetTerm:
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = value

    def d(self, rho: float, r: float) -> float:
        return r * self.value

    def d1(self, rho: float, r: float) -> float:
        return self.value

    def d2(self, rho: float, r: float) -> float:
        return 0.0


class _TruncNormTerm:
    """Monte Carlo term over a fixed draw vector (common random numbers).

    Reusing one draw vector across every r keeps d smooth in r, which the
    Newton steps in the demand solver rely on.
    """

    __slots__ = ("draws",)

    def __init__(self, draws: np.ndarray):
        self.draws = draws

    def _weights(self, rho: float, r: float) -> np.ndarray:
        return np.exp(-r * self.draws / rho)

    def d(self, rho: float, r: float) -> float:
        return -rho * math.log(float(np.mean(self._weights(rho, r))))

    def d1(self, rho: float, r: float) -> float:
        w = self._weights(rho, r)
        return float(np.sum(self.draws * w) / np.sum(w))

    def d2(self, rho: float, r: float) -> float:
        w = self._weights(rho, r)
        total = np.sum(w)
        m1 = float(np.sum(self.draws * w) / total)
        m2 = float(np.sum(self.draws * self.draws * w) / total)
        return -(m2 - m1 * m1) / rho


def build_terms(
    rho: float,
    specs: Sequence[ArrivalSpec],
    seed: int = 0,
    n_samples: int = TRUNCNORM_TERM_DRAWS,
    purpose: str = "ce-truncated-normal",
    indices: tuple[int, ...] = (),
):
    """Per-arrival derivative-carrying terms for sum-of-arrivals loads."""
    terms = []
    for i, spec in enumerate(specs):
        spec.validate()
        if spec.kind == EXPONENTIAL:
            terms.append(_ExpTerm(rho, float(spec.rate)))
        elif spec.kind == POISSON:
            terms.append(_PoissonTerm(float(spec.rate)))
        elif spec.kind == DETERMINISTIC:
            terms.append(_DetTerm(float(spec.value)))
        elif spec.kind == TRUNCATED_NORMAL:
            rng = substream(seed, purpose, *indices, i)
            terms.append(_TruncNormTerm(spec.sample(rng, n_samples)))
        else:
            raise ValueError(f"unsupported arrival kind {spec.kind!r}")
    return terms


def ce_generic(
    rho: float,
    spec: ArrivalSpec | Sequence[ArrivalSpec],
    r: float,
    seed: int = 0,
    n_samples: int = TRUNCNORM_TERM_DRAWS,
) -> float:
    """Deterministic equivalent of r times the total load of one or more arrivals.

    Exponential terms delegate to the same expression as ce_exponential_load,
    poisson terms use rho * rate * (1 - exp(-r/rho)), deterministic terms are
    r * value, and truncated-normal terms are estimated by Monte Carlo with a
    seed derived from `seed`.
    """
    specs = [spec] if isinstance(spec, ArrivalSpec) else list(spec)
    _check_rho_r(rho, r)
    terms = build_terms(rho, specs, seed=seed, n_samples=n_samples)
    return float(sum(t.d(rho, r) for t in terms))


def _total_draws(
    specs: Sequence[ArrivalSpec], n_samples: int, seed: int
) -> np.ndarray:
    rng = substream(seed, "mc-ce-oracle")
    total = np.zeros(n_samples)
    for spec in specs:
        spec.validate()
        total += spec.sample(rng, n_samples)
    return total


def mc_ce_oracle(
    rho: float,
    spec: ArrivalSpec | Sequence[ArrivalSpec],
    r: float,
    n_samples: int,
    seed: int = 0,
) -> float:
    """Monte Carlo estimate -rho * ln mean(exp(-r*Q/rho)) over draws of Q."""
    est, _ = mc_ce_with_stderr(rho, spec, r, n_samples, seed)
    return est


def mc_ce_with_stderr(
    rho: float,
    spec: ArrivalSpec | Sequence[ArrivalSpec],
    r: float,
    n_samples: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Oracle estimate plus its delta-method standard error."""
    specs = [spec] if isinstance(spec, ArrivalSpec) else list(spec)
    _check_rho_r(rho, r)
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples!r}")
    q = _total_draws(specs, n_samples, seed)
    y = np.exp(-r * q / rho)
    mean_y = float(np.mean(y))
    est = -rho * math.log(mean_y)
    if n_samples == 1:
        return est, math.inf
    se_mean = float(np.std(y, ddof=1)) / math.sqrt(n_samples)
    return est, rho * se_mean / mean_y
