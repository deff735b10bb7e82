"""Pure-Python detection kernel (fallback for the compiled extension).

Keep the semantics byte-for-byte identical to ``_detect.pyx``: the test
suite asserts parity between the two backends.
"""

import numpy as np

DRAWUP = 1
DRAWDOWN = -1


def detect_segments(returns, eps):
    """Split one day of bar log-returns into alternating drawdown/drawup segments.

    Parameters
    ----------
    returns : array of float
        Bar log-returns; ``returns[i]`` connects close ``i`` to close ``i+1``.
    eps : float
        Counter-move threshold in log-return units. ``eps = 0`` reproduces
        the classical sign-run decomposition.

    Returns
    -------
    list of (kind, k_start, k_end)
        ``kind`` is +1 for a drawup, -1 for a drawdown; ``k_start``/``k_end``
        are close indices (0..len(returns)). The final segment of the day,
        whose counter-move never exceeded ``eps``, is discarded.
    """
    r = np.ascontiguousarray(returns, dtype=np.float64)
    n = r.shape[0]

    i0 = 0
    while i0 < n and r[i0] == 0.0:
        i0 += 1
    if i0 == n:
        return []

    kind = DRAWUP if r[i0] > 0.0 else DRAWDOWN
    k0 = i0
    events = []
    while True:
        cum = 0.0
        ext = 0.0
        k_ext = k0
        terminated = False
        for k in range(k0 + 1, n + 1):
            cum += r[k - 1]
            if kind == DRAWDOWN:
                # ties move the extremum forward: last touch of the minimum
                if cum <= ext:
                    ext = cum
                    k_ext = k
                delta = cum - ext
            else:
                if cum >= ext:
                    ext = cum
                    k_ext = k
                delta = ext - cum
            if delta > eps:
                events.append((kind, k0, k_ext))
                kind = -kind
                k0 = k_ext
                terminated = True
                break
        if not terminated:
            break
    return events
