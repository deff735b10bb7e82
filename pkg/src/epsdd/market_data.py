"""Tick parsing, cleaning, bar aggregation and futures roll stitching."""

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

#: ordered cleaning rules; keys are also used in the CleanReport
CLEAN_RULES = (
    "outside_ath",
    "zero_price_or_quote",
    "negative_spread",
    "excessive_spread",
    "corrected_trade",
    "price_outside_quotes",
    "gap_day",
)

QUOTE_RULES = ("negative_spread", "excessive_spread", "price_outside_quotes")


@dataclass(frozen=True)
class SessionSpec:
    """Active trading hours in exchange-local wall-clock time."""

    ath_start: time
    ath_end: time
    timezone_label: str = ""
    max_gap: float = 300.0

    def __post_init__(self):
        if self.ath_start >= self.ath_end:
            raise ValueError("ath_start must precede ath_end")
        if self.max_gap <= 0:
            raise ValueError("max_gap must be positive")

    @property
    def duration(self) -> float:
        """Session length in seconds."""
        start = datetime.combine(date.min, self.ath_start)
        end = datetime.combine(date.min, self.ath_end)
        return (end - start).total_seconds()


@dataclass(frozen=True)
class RowError:
    line: int
    message: str


@dataclass
class CleanReport:
    input_rows: int
    removed: dict = field(default_factory=dict)
    excluded_gap_days: list = field(default_factory=list)
    rules_skipped: list = field(default_factory=list)
    surviving_rows: int = 0

    def to_dict(self) -> dict:
        return {
            "input_rows": self.input_rows,
            "removed": dict(self.removed),
            "excluded_gap_days": [d.isoformat() for d in self.excluded_gap_days],
            "rules_skipped": list(self.rules_skipped),
            "surviving_rows": self.surviving_rows,
        }


@dataclass
class BarSeries:
    """One day of fixed-width bar closes and their log-returns."""

    day: date
    bar_width: float
    closes: np.ndarray
    returns: np.ndarray = None
    first_bar_index: int = 0

    def __post_init__(self):
        self.closes = np.asarray(self.closes, dtype=np.float64)
        if self.returns is None:
            self.returns = np.diff(np.log(self.closes))
        else:
            self.returns = np.asarray(self.returns, dtype=np.float64)
        if len(self.returns) != len(self.closes) - 1:
            raise ValueError("returns length must be closes length - 1")

    @property
    def n_bars(self) -> int:
        return len(self.closes)


def _parse_timestamp(raw: str) -> pd.Timestamp:
    raw = raw.strip()
    try:
        return pd.Timestamp(int(raw), unit="ms")
    except ValueError:
        pass
    ts = pd.Timestamp(raw)
    if ts is pd.NaT:
        raise ValueError(f"unparsable timestamp {raw!r}")
    return ts


def parse_ticks(source, columns):
    """Parse a tick CSV into a timestamp-sorted DataFrame.

    Parameters
    ----------
    source : path, file-like or bytes
        CSV with a header row. Timestamps may be ISO-8601 strings or epoch
        milliseconds.
    columns : dict
        Maps logical fields (``timestamp``, ``price`` and optionally ``bid``,
        ``ask``, ``volume``, ``corrected``) to CSV column names.

    Returns
    -------
    (DataFrame, list of RowError)
        Stable-sorted by timestamp; malformed rows are reported, not fatal.
    """
    if isinstance(source, bytes):
        handle = io.StringIO(source.decode("utf-8"))
    elif hasattr(source, "read"):
        raw = source.read()
        handle = io.StringIO(raw.decode("utf-8") if isinstance(raw, bytes) else raw)
    else:
        handle = open(source, newline="")

    required = ("timestamp", "price")
    for name in required:
        if name not in columns:
            raise ValueError(f"column map must name a {name!r} column")
    optional = [c for c in ("bid", "ask", "volume", "corrected") if c in columns]

    rows = []
    errors = []
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for name in required:
            if columns[name] not in header:
                raise ValueError(f"missing column {columns[name]!r} in header")
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = {
                    "timestamp": _parse_timestamp(row[columns["timestamp"]]),
                    "price": float(row[columns["price"]]),
                }
                for name in optional:
                    raw = (row.get(columns[name]) or "").strip()
                    if name == "corrected":
                        rec[name] = raw.lower() in ("1", "true", "t", "yes", "y")
                    else:
                        rec[name] = float(raw) if raw else 0.0
                for name in ("price", "bid", "ask"):
                    if rec.get(name, 0.0) < 0:
                        raise ValueError(f"negative {name}")
                rows.append(rec)
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(RowError(line=lineno, message=str(exc)))

    frame = pd.DataFrame(
        rows, columns=["timestamp", "price", *optional]
    )
    if frame.empty:
        frame = pd.DataFrame({"timestamp": pd.Series([], dtype="datetime64[ns]"),
                              "price": pd.Series([], dtype=float)})
        for name in optional:
            frame[name] = pd.Series([], dtype=bool if name == "corrected" else float)
    frame = frame.sort_values("timestamp", kind="stable", ignore_index=True)
    return frame, errors


def clean_ticks(ticks: pd.DataFrame, session: SessionSpec):
    """Apply the six standard cleaning rules plus whole-day gap exclusion.

    Rules, in order: (i) outside active trading hours; (ii) zero price/bid/ask;
    (iii) negative spread; (iv) spread above 20x the daily median spread;
    (v) corrected trades; (vi) price outside [bid - spread, ask + spread].
    Days with any intra-session gap longer than ``session.max_gap`` seconds
    between surviving rows are dropped wholesale and listed in the report.

    Quote rules (iii), (iv), (vi) are skipped when bid/ask columns are absent.
    """
    report = CleanReport(input_rows=len(ticks))
    report.removed = {rule: 0 for rule in CLEAN_RULES}
    has_quotes = "bid" in ticks.columns and "ask" in ticks.columns
    if not has_quotes:
        report.rules_skipped = [r for r in QUOTE_RULES]

    df = ticks.reset_index(drop=True)

    def drop(mask, rule):
        report.removed[rule] += int(mask.sum())
        return df.loc[~mask].copy() if mask.any() else df

    tod = df["timestamp"].dt.time if len(df) else pd.Series([], dtype=object)
    inside = pd.Series(
        [(session.ath_start <= t <= session.ath_end) for t in tod],
        index=df.index, dtype=bool,
    )
    df = drop(~inside, "outside_ath")

    zero = df["price"] == 0
    if has_quotes:
        zero |= (df["bid"] == 0) | (df["ask"] == 0)
    df = drop(zero, "zero_price_or_quote")

    if has_quotes:
        spread = df["ask"] - df["bid"]
        df = drop(spread < 0, "negative_spread")

        spread = df["ask"] - df["bid"]
        day = df["timestamp"].dt.normalize()
        med = spread.groupby(day).transform("median")
        df = drop(spread > 20 * med, "excessive_spread")

    if "corrected" in df.columns:
        df = drop(df["corrected"].astype(bool), "corrected_trade")

    if has_quotes:
        spread = df["ask"] - df["bid"]
        outside = (df["price"] > df["ask"] + spread) | (df["price"] < df["bid"] - spread)
        df = drop(outside, "price_outside_quotes")

    # whole-day exclusion on intra-session quiet stretches
    if len(df):
        gaps = df.groupby(df["timestamp"].dt.normalize())["timestamp"].agg(
            lambda ts: ts.diff().dt.total_seconds().max()
        )
        bad_days = {d.date() for d, g in gaps.items() if g is not None and g > session.max_gap}
        if bad_days:
            mask = df["timestamp"].dt.date.isin(bad_days)
            df = drop(pd.Series(mask, index=df.index), "gap_day")
            report.excluded_gap_days = sorted(bad_days)

    df = df.reset_index(drop=True)
    report.surviving_rows = len(df)
    assert sum(report.removed.values()) + report.surviving_rows == report.input_rows
    return df, report


def aggregate_bars(ticks: pd.DataFrame, bar_width: float, session: SessionSpec):
    """Aggregate cleaned ticks into fixed-width bars, one BarSeries per day.

    Bar closes are the last trade price at or before each bar boundary;
    boundaries before the first trade of the day are absent, and bars without
    trades carry the previous close forward (zero return). The trailing
    partial bar, if the width does not divide the session, is dropped.
    """
    n_bounds = math.floor(session.duration / bar_width)
    out = []
    if not len(ticks):
        return out
    for day_ts, chunk in ticks.groupby(ticks["timestamp"].dt.normalize()):
        day = day_ts.date()
        if not len(chunk):
            log.info("day %s omitted: no trades", day)
            continue
        start = datetime.combine(day, session.ath_start)
        bounds = np.array(
            [start + timedelta(seconds=bar_width * k) for k in range(n_bounds + 1)],
            dtype="datetime64[ns]",
        )
        ts = chunk["timestamp"].to_numpy()
        prices = chunk["price"].to_numpy(dtype=np.float64)
        # index of last trade at or before each boundary
        idx = np.searchsorted(ts, bounds, side="right") - 1
        have = idx >= 0
        if not have.any():
            log.info("day %s omitted: no trades before any bar boundary", day)
            continue
        first = int(np.argmax(have))
        closes = prices[idx[first:]]
        out.append(BarSeries(day=day, bar_width=bar_width, closes=closes,
                             first_bar_index=first))
    return out


def stitch_roll(front, nxt, roll_date: date):
    """Join two per-day bar series at a roll date.

    Days strictly before ``roll_date`` come from ``front``; days on or after
    come from ``nxt``. No price adjustment is applied across the roll: all
    returns are intraday, so the inter-day gap is never differenced.
    """
    if not any(b.day >= roll_date for b in nxt):
        raise ValueError(f"next contract has no trading day on/after roll date {roll_date}")
    out = [b for b in front if b.day < roll_date]
    out += [b for b in nxt if b.day >= roll_date]
    out.sort(key=lambda b: b.day)
    return out


def bars_to_frame(series_list) -> pd.DataFrame:
    """Flatten BarSeries into a (day, bar_index, close, return) table."""
    rows = []
    for bars in series_list:
        for j, close in enumerate(bars.closes):
            ret = bars.returns[j - 1] if j > 0 else np.nan
            rows.append((bars.day.isoformat(), bars.first_bar_index + j, close, ret))
    return pd.DataFrame(rows, columns=["day", "bar_index", "close", "return"])
