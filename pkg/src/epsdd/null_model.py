"""Reshuffled-returns null model and seeded synthetic-sample generators.

All randomness flows through Philox counter-based generators keyed by
(seed, stream), so fixtures are reproducible across platforms and
per-day/per-seed streams are independent.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from epsdd.market_data import BarSeries

GENERATOR_ALGORITHM = "philox4x64"


@dataclass(frozen=True)
class SeededGenerator:
    seed: int
    stream: int = 0
    algorithm: str = GENERATOR_ALGORITHM

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=[self.seed, self.stream]))

    def split(self, stream: int) -> "SeededGenerator":
        return SeededGenerator(seed=self.seed, stream=stream)


def _rng(gen) -> np.random.Generator:
    if isinstance(gen, SeededGenerator):
        return gen.generator()
    return gen


def reshuffle_day(bars: BarSeries, gen) -> BarSeries:
    """Uniform random permutation of one day's returns.

    Closes are rebuilt from the permuted returns anchored at the day's first
    close; the return multiset and the day's RMS volatility are preserved
    exactly.
    """
    if len(bars.returns) == 0:
        raise ValueError("empty day")
    rng = _rng(gen)
    perm = rng.permutation(bars.returns)
    closes = np.empty(len(bars.closes))
    closes[0] = bars.closes[0]
    closes[1:] = bars.closes[0] * np.exp(np.cumsum(perm))
    return BarSeries(day=bars.day, bar_width=bars.bar_width, closes=closes,
                     returns=perm, first_bar_index=bars.first_bar_index)


def sample_pareto(n: int, alpha: float, x_m: float, gen) -> np.ndarray:
    """Inverse-cdf Pareto draws x = x_m * U^(-1/alpha)."""
    if alpha <= 0 or x_m <= 0 or n < 1:
        raise ValueError("need alpha > 0, x_m > 0, n >= 1")
    u = _rng(gen).random(n)
    return x_m * u ** (-1.0 / alpha)


def sample_exponential(n: int, rate: float, gen) -> np.ndarray:
    if rate <= 0 or n < 1:
        raise ValueError("need rate > 0, n >= 1")
    return _rng(gen).exponential(1.0 / rate, n)


def inject_outliers(tail, factors) -> "ExponentialTail":
    """Append values factor * y_1 to an exponential tail and re-sort."""
    from epsdd.outlier_tests import ExponentialTail

    if len(tail.y) == 0:
        raise ValueError("empty tail")
    for f in factors:
        if f <= 1:
            raise ValueError("outlier factors must exceed 1")
    y1 = tail.y[0]
    y = np.concatenate([tail.y, [f * y1 for f in factors]])
    prov = np.concatenate([tail.provenance,
                           -np.arange(1, len(list(factors)) + 1)])
    order = np.argsort(-y, kind="stable")
    return ExponentialTail(y=y[order], x_m=tail.x_m, provenance=prov[order])


def spliced_weight(mu: float, s: float, alpha: float, splice: float) -> float:
    """Mixing weight of the truncated-lognormal body that makes the spliced
    density continuous at the splice point."""
    if splice <= 0:
        raise ValueError("splice point must be positive")
    if math.isinf(splice):
        return 1.0
    zeta = (math.log(splice) - mu) / s
    body_cdf = 0.5 * (1 + math.erf(zeta / math.sqrt(2)))
    body_pdf = math.exp(-0.5 * zeta * zeta) / (splice * s * math.sqrt(2 * math.pi))
    if body_cdf <= 0 or body_pdf <= 0:
        raise ValueError("continuous splice infeasible: body density vanishes at splice")
    a = body_pdf / body_cdf      # truncated body density at the splice
    b = alpha / splice           # Pareto density at the splice
    return b / (a + b)


def sample_spliced(n: int, mu: float, s: float, alpha: float, splice: float,
                   gen) -> np.ndarray:
    """Lognormal body below the splice, Pareto tail above, density-continuous."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if math.isinf(splice):
        rng = _rng(gen)
        return np.exp(mu + s * rng.standard_normal(n))
    w = spliced_weight(mu, s, alpha, splice)
    rng = _rng(gen)
    pick_body = rng.random(n) < w
    u = rng.random(n)
    out = np.empty(n)
    zeta = (math.log(splice) - mu) / s
    body_cdf = 0.5 * (1 + math.erf(zeta / math.sqrt(2)))
    # inverse cdf of the lognormal truncated to (0, splice]
    ub = u[pick_body] * body_cdf
    out[pick_body] = np.exp(mu + s * special.ndtri(ub))
    out[~pick_body] = splice * u[~pick_body] ** (-1.0 / alpha)
    return out
