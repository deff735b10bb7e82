"""Empirical conditional tail-dependence coefficient on a probability grid."""

from dataclasses import dataclass

import numpy as np

from epsdd.events import lower_quantile

DEFAULT_GRID = (0.90, 0.95, 0.99, 0.995, 0.999)


@dataclass
class LambdaCurve:
    u: np.ndarray
    lam: np.ndarray          # NaN where the conditioning set is empty
    n_cond: np.ndarray

    def to_rows(self):
        return [
            {"u": float(u), "lambda": float(l), "n_cond": int(n)}
            for u, l, n in zip(self.u, self.lam, self.n_cond)
        ]


def lambda_u(x, y, u: float):
    """P(X above its u-quantile | Y above its u-quantile), empirically.

    Strict exceedance on both sides; the empirical quantile is the lower
    order statistic at ceil(u * n). Returns (lambda, n_cond), with lambda
    None when no observation exceeds the conditioning quantile.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError("samples must be paired")
    if not 0 < u < 1:
        raise ValueError("u must be in (0, 1)")
    if len(x) < 1.0 / (1.0 - u):
        raise ValueError(f"sample of {len(x)} too small for u={u}")
    qx = lower_quantile(x, u)
    qy = lower_quantile(y, u)
    cond = y > qy
    n_cond = int(cond.sum())
    if n_cond == 0:
        return None, 0
    lam = float(np.sum((x > qx) & cond) / n_cond)
    return lam, n_cond


def lambda_curve(x, y, grid=DEFAULT_GRID) -> LambdaCurve:
    """Evaluate lambda_u over a grid of probability levels."""
    lams, counts = [], []
    for u in grid:
        lam, n_cond = lambda_u(x, y, u)
        lams.append(np.nan if lam is None else lam)
        counts.append(n_cond)
    return LambdaCurve(u=np.asarray(grid, dtype=float),
                       lam=np.asarray(lams), n_cond=np.asarray(counts))
