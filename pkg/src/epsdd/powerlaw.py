"""Pareto tail fitting: Hill MLE with KS/AD-minimizing lower-bound scan."""

import math
from dataclasses import dataclass

import numpy as np


class DegenerateTailError(ValueError):
    """All tail points coincide with the lower bound; the MLE diverges."""


@dataclass(frozen=True)
class PowerLawFit:
    x_m: float
    alpha: float
    alpha_se: float
    n_tail: int
    ks: float = math.nan
    ad: float = math.nan
    distance_used: str = ""

    def to_dict(self) -> dict:
        return {
            "x_m": self.x_m,
            "alpha": self.alpha,
            "alpha_se": self.alpha_se,
            "n_tail": self.n_tail,
            "D": self.ks,
            "A2": self.ad,
            "distance_used": self.distance_used,
        }


@dataclass(frozen=True)
class ScanConfig:
    n_min: int = 50
    candidate_policy: str = "all"   # "all" unique values, or "quantile"
    grid_size: int = 200

    def __post_init__(self):
        if self.n_min < 10:
            raise ValueError("n_min must be at least 10")
        if self.candidate_policy not in ("all", "quantile"):
            raise ValueError(f"unknown candidate policy {self.candidate_policy!r}")


def hill_mle(sample, x_m: float):
    """Closed-form tail-exponent MLE over points >= x_m.

    Returns ``(alpha, alpha_se)`` with ``alpha = N / sum(ln(x_i / x_m))``
    and ``alpha_se = alpha / sqrt(N)``.
    """
    x = np.asarray(sample, dtype=np.float64)
    tail = x[x >= x_m]
    n = len(tail)
    if n < 2 or not np.any(tail > x_m):
        raise DegenerateTailError(
            f"need at least 2 tail points with one strictly above x_m={x_m}")
    s = np.log(tail / x_m).sum()
    if s <= 0:
        raise DegenerateTailError("all tail points equal to x_m")
    alpha = n / s
    return alpha, alpha / math.sqrt(n)


def pareto_cdf(x, x_m: float, alpha: float):
    return 1.0 - (x_m / np.asarray(x, dtype=np.float64)) ** alpha


def ks_distance(tail, x_m: float, alpha: float) -> float:
    """Max deviation between the empirical step cdf and the fitted Pareto cdf.

    Both the right limit i/N and the left limit (i-1)/N of the step are
    compared at every sample point.
    """
    t = np.asarray(tail, dtype=np.float64)
    n = len(t)
    if n == 0:
        raise ValueError("empty tail")
    f = pareto_cdf(t, x_m, alpha)
    i = np.arange(1, n + 1)
    return float(np.maximum(np.abs(i / n - f), np.abs((i - 1) / n - f)).max())


def ad_distance(tail, x_m: float, alpha: float) -> float:
    """Anderson-Darling distance of the sorted tail against the fitted cdf.

    The cdf is clamped into [1/(2N), 1 - 1/(2N)] before taking logs so the
    boundary point x_1 = x_m (where F = 0) evaluates finitely.
    """
    t = np.asarray(tail, dtype=np.float64)
    n = len(t)
    if n == 0:
        raise ValueError("empty tail")
    clamp = 1.0 / (2 * n)
    f = np.clip(pareto_cdf(t, x_m, alpha), clamp, 1.0 - clamp)
    i = np.arange(1, n + 1)
    return float(-n - np.sum((2 * i - 1) / n * (np.log(f) + np.log(1.0 - f[::-1]))))


_DISTANCES = {"KS": ks_distance, "AD": ad_distance}


def scan_xmin(sample, scan: ScanConfig = ScanConfig(), distance: str = "KS") -> PowerLawFit:
    """Select the lower bound minimizing the chosen distance.

    Every candidate x_m (each unique sample value, or a quantile grid) is
    fitted by the Hill MLE and scored on its own tail; the fit with the
    smallest distance wins, ties broken toward smaller x_m, subject to
    ``n_tail >= scan.n_min``.
    """
    if distance not in _DISTANCES:
        raise ValueError(f"unknown distance {distance!r}")
    dist_fn = _DISTANCES[distance]
    x = np.sort(np.asarray(sample, dtype=np.float64))
    n = len(x)
    if n < scan.n_min:
        raise ValueError(f"sample size {n} below n_min={scan.n_min}")

    uniq = np.unique(x)
    # candidates whose closed tail still holds at least n_min points
    feasible = uniq[np.searchsorted(x, uniq, side="left") <= n - scan.n_min]
    if scan.candidate_policy == "quantile" and len(feasible) > scan.grid_size:
        idx = np.unique(np.linspace(0, len(feasible) - 1, scan.grid_size).astype(int))
        feasible = feasible[idx]
    if len(feasible) == 0:
        raise ValueError("no candidate lower bound satisfies n_min")

    best = None
    best_d = math.inf
    for xm in feasible:
        tail = x[np.searchsorted(x, xm, side="left"):]
        try:
            alpha, se = hill_mle(tail, xm)
        except DegenerateTailError:
            continue
        d = dist_fn(tail, xm, alpha)
        if d < best_d:  # strict: ties keep the earlier (smaller) x_m
            best_d = d
            best = (xm, alpha, se, len(tail))
    if best is None:
        raise ValueError("no candidate lower bound admits a nondegenerate fit")
    xm, alpha, se, n_tail = best
    tail = x[np.searchsorted(x, xm, side="left"):]
    return PowerLawFit(
        x_m=float(xm), alpha=alpha, alpha_se=se, n_tail=n_tail,
        ks=ks_distance(tail, xm, alpha), ad=ad_distance(tail, xm, alpha),
        distance_used=distance,
    )
