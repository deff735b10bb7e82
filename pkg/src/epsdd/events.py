"""Epsilon-drawdown/drawup detection and event characterization."""

import math
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from epsdd._kernel import detect_segments
from epsdd.market_data import BarSeries

DRAWUP = "drawup"
DRAWDOWN = "drawdown"

_KIND_NAME = {1: DRAWUP, -1: DRAWDOWN}

#: event fields accepted by descriptive_stats / pooling
STAT_FIELDS = ("duration", "size", "norm_ret", "norm_speed")


@dataclass(frozen=True)
class EpsilonConfig:
    """Detection configuration.

    In ``adaptive`` mode the stopping threshold is ``epsilon0`` times the
    previous day's volatility; in ``fixed`` mode it is ``fixed_epsilon``
    in log-return units.
    """

    bar_width: float = 30.0
    epsilon0: float = 1.0
    epsilon_mode: str = "adaptive"
    fixed_epsilon: float = 0.0

    def __post_init__(self):
        if self.epsilon_mode not in ("adaptive", "fixed"):
            raise ValueError(f"unknown epsilon_mode {self.epsilon_mode!r}")
        if self.epsilon_mode == "adaptive" and self.epsilon0 <= 0:
            raise ValueError("epsilon0 must be positive in adaptive mode")
        if self.epsilon_mode == "fixed" and self.fixed_epsilon < 0:
            raise ValueError("fixed epsilon must be nonnegative")

    def epsilon(self, sigma_prev: float) -> float:
        if self.epsilon_mode == "adaptive":
            return self.epsilon0 * sigma_prev
        return self.fixed_epsilon


@dataclass(frozen=True)
class DayVolatility:
    day: date
    sigma: float


@dataclass
class Event:
    """One detected drawdown or drawup with its six characteristics."""

    kind: str
    day: date
    k_start: int
    k_end: int
    duration: float          # seconds, multiple of the bar width
    size: float              # |P_end - P_start| in price units
    ret: float               # |log P_end - log P_start|
    norm_ret: float          # ret / sigma of the previous day
    speed: float             # ret / duration, per second
    norm_speed: float        # norm_ret / duration, per second
    norm_bar_returns: np.ndarray = field(repr=False, default=None)
    contract: str = ""
    normalizable: bool = True


@dataclass
class EventSeries:
    contract: str
    config: EpsilonConfig
    events: list = field(default_factory=list)


def day_volatility(bars: BarSeries) -> DayVolatility:
    """Uncentered RMS of the day's bar log-returns.

    The sum of squares is accumulated with ``math.fsum`` so the result is
    exactly invariant under permutation of the returns.
    """
    r = bars.returns
    if len(r) == 0:
        raise ValueError(f"day {bars.day} has no returns; cannot compute volatility")
    sigma = math.sqrt(math.fsum(float(x) * float(x) for x in r) / len(r))
    return DayVolatility(day=bars.day, sigma=sigma)


def detect_events(returns, epsilon: float):
    """Run the cursor procedure on one day of bar log-returns.

    Returns event skeletons ``(kind, k_start, k_end)`` with ``kind`` in
    {"drawdown", "drawup"} and close indices into the day's bar series.
    The day's final, never-terminated event is discarded.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    returns = np.asarray(returns, dtype=np.float64)
    if len(returns) == 0:
        raise ValueError("empty return series")
    return [(_KIND_NAME[kind], k0, k1)
            for kind, k0, k1 in detect_segments(returns, float(epsilon))]


def characterize(skeleton, bars: BarSeries, sigma_prev: float) -> Event:
    """Fill in all six event characteristics from a detected skeleton."""
    kind, k_start, k_end = skeleton
    closes = bars.closes
    dt = bars.bar_width
    duration = (k_end - k_start) * dt
    size = abs(closes[k_end] - closes[k_start])
    ret = abs(math.log(closes[k_end]) - math.log(closes[k_start]))
    seg = bars.returns[k_start:k_end]
    if sigma_prev > 0:
        norm_ret = ret / sigma_prev
        norm_bar = seg / sigma_prev
        normalizable = True
    else:
        norm_ret = math.nan
        norm_bar = np.full(len(seg), math.nan)
        normalizable = False
    return Event(
        kind=kind,
        day=bars.day,
        k_start=bars.first_bar_index + k_start,
        k_end=bars.first_bar_index + k_end,
        duration=duration,
        size=size,
        ret=ret,
        norm_ret=norm_ret,
        speed=ret / duration,
        norm_speed=norm_ret / duration,
        norm_bar_returns=norm_bar,
        normalizable=normalizable,
    )


def detect_series(days, config: EpsilonConfig, contract: str = "") -> EventSeries:
    """Detect events over a stitched per-day series.

    The first day only seeds the volatility and yields no events; detection
    never spans days.
    """
    series = EventSeries(contract=contract, config=config)
    sigma_prev = None
    for bars in days:
        if sigma_prev is not None:
            eps = config.epsilon(sigma_prev)
            for skel in detect_events(bars.returns, eps):
                ev = characterize(skel, bars, sigma_prev)
                ev.contract = contract
                series.events.append(ev)
        sigma_prev = day_volatility(bars).sigma
    return series


def lower_quantile(values, p: float):
    """Lower order statistic at 1-based index ceil(p * n); no interpolation."""
    v = np.sort(np.asarray(values))
    n = len(v)
    if n == 0:
        raise ValueError("empty sample")
    i = min(max(math.ceil(p * n), 1), n)
    return v[i - 1]


def descriptive_stats(series: EventSeries, field_name: str) -> dict:
    """Count, median, 90% quantile and max of one event characteristic."""
    if field_name not in STAT_FIELDS:
        raise ValueError(f"unknown field {field_name!r}")
    vals = np.array([getattr(e, field_name) for e in series.events], dtype=float)
    if len(vals) == 0:
        raise ValueError("empty event series")
    return {
        "count": len(vals),
        "median": float(lower_quantile(vals, 0.5)),
        "q90": float(lower_quantile(vals, 0.9)),
        "max": float(vals.max()),
    }


def pool_events(series_list) -> dict:
    """Concatenate events of several contracts, split by kind.

    All inputs must share the same detection configuration. Events flagged
    un-normalizable are excluded. Provenance (contract, day, bar index)
    stays on each event.
    """
    if not series_list:
        return {DRAWDOWN: [], DRAWUP: []}
    ref = series_list[0].config
    for s in series_list[1:]:
        if s.config != ref:
            raise ValueError("cannot pool event series with different configurations")
    pooled = {DRAWDOWN: [], DRAWUP: []}
    for s in series_list:
        for ev in s.events:
            if ev.normalizable:
                pooled[ev.kind].append(ev)
    return pooled


def field_values(events, field_name: str) -> np.ndarray:
    return np.array([getattr(e, field_name) for e in events], dtype=float)


def count_tail_returns(event: Event, threshold: float) -> int:
    """Number of the event's own-polarity bar returns at or above the
    per-return tail threshold (in normalized-return units)."""
    r = event.norm_bar_returns
    if event.kind == DRAWDOWN:
        own = r[r < 0]
    else:
        own = r[r > 0]
    return int(np.sum(np.abs(own) >= threshold))


def contribution_ratio(event: Event, threshold: float):
    """Share of the event's normalized return carried by its tail-exceeding
    bar returns; None when the event contains no such return."""
    r = event.norm_bar_returns
    if event.kind == DRAWDOWN:
        own = r[r < 0]
    else:
        own = r[r > 0]
    tail = np.abs(own)[np.abs(own) >= threshold]
    if len(tail) == 0:
        return None
    return float(tail.sum() / event.norm_ret)
