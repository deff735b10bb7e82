"""Tick parsing, cleaning, bar aggregation and roll stitching."""

import datetime
import io
import math

import numpy as np
import pandas as pd
import pytest

from epsdd.market_data import (
    CLEAN_RULES,
    QUOTE_RULES,
    BarSeries,
    SessionSpec,
    aggregate_bars,
    bars_to_frame,
    clean_ticks,
    parse_ticks,
    stitch_roll,
)

SESSION = SessionSpec(ath_start=datetime.time(9, 0), ath_end=datetime.time(17, 0))
COLUMNS = {"timestamp": "ts", "price": "px"}
QCOLUMNS = {**COLUMNS, "bid": "bid", "ask": "ask", "corrected": "corr"}


def _csv(rows, header="ts,px"):
    return io.StringIO("\n".join([header, *rows]) + "\n")


def _qrow(ts, px, bid=None, ask=None, corr="0"):
    bid = px - 0.5 if bid is None else bid
    ask = px + 0.5 if ask is None else ask
    return f"{ts},{px},{bid},{ask},{corr}"


class TestParse:
    def test_sorted_output(self):
        frame, errors = parse_ticks(_csv([
            "2020-01-02T09:00:10,101.0",
            "2020-01-02T09:00:00,100.0",
            "2020-01-02T09:00:05,100.5",
        ]), COLUMNS)
        assert errors == []
        assert list(frame["price"]) == [100.0, 100.5, 101.0]
        assert frame["timestamp"].is_monotonic_increasing

    def test_epoch_milliseconds(self):
        ms = 1577955600000  # 2020-01-02 09:00:00 UTC
        frame, errors = parse_ticks(_csv([f"{ms},100.0"]), COLUMNS)
        assert errors == []
        assert frame["timestamp"].iloc[0] == pd.Timestamp(ms, unit="ms")

    def test_bad_row_reported_with_line_number(self):
        frame, errors = parse_ticks(_csv([
            "2020-01-02T09:00:00,100.0",
            "2020-01-02T09:00:01,not-a-price",
            "2020-01-02T09:00:02,100.2",
        ]), COLUMNS)
        assert len(frame) == 2
        assert len(errors) == 1 and errors[0].line == 3

    def test_negative_price_is_an_error(self):
        _, errors = parse_ticks(_csv(["2020-01-02T09:00:00,-1.0"]), COLUMNS)
        assert len(errors) == 1

    def test_empty_file(self):
        frame, errors = parse_ticks(_csv([]), COLUMNS)
        assert len(frame) == 0 and errors == []

    def test_missing_required_column(self):
        with pytest.raises(ValueError, match="px"):
            parse_ticks(_csv([], header="ts,other"), COLUMNS)

    def test_stable_sort_preserves_equal_timestamp_order(self):
        frame, _ = parse_ticks(_csv([
            "2020-01-02T09:00:00,1.0",
            "2020-01-02T09:00:00,2.0",
            "2020-01-02T09:00:00,3.0",
        ]), COLUMNS)
        assert list(frame["price"]) == [1.0, 2.0, 3.0]


class TestClean:
    def test_no_op_on_clean_data(self):
        frame, _ = parse_ticks(_csv([
            _qrow("2020-01-02T09:00:00", 100.0),
            _qrow("2020-01-02T09:02:00", 100.1),
            _qrow("2020-01-02T09:04:00", 100.2),
        ], header="ts,px,bid,ask,corr"), QCOLUMNS)
        cleaned, report = clean_ticks(frame, SESSION)
        assert len(cleaned) == 3
        assert all(v == 0 for v in report.removed.values())
        assert report.rules_skipped == []

    def test_rules_remove_in_order(self):
        rows = [
            _qrow("2020-01-02T08:59:59", 100.0),                    # outside ATH
            _qrow("2020-01-02T09:00:00", 100.0),
            _qrow("2020-01-02T09:01:00", 0.0, bid=99.5, ask=100.5),  # zero price
            _qrow("2020-01-02T09:02:00", 100.0, bid=101.0, ask=100.5),  # neg spread
            _qrow("2020-01-02T09:03:00", 100.0, bid=80.0, ask=120.0),   # 40 >> 20x median
            _qrow("2020-01-02T09:04:00", 100.0, corr="1"),          # corrected
            _qrow("2020-01-02T09:06:00", 150.0, bid=99.5, ask=100.5),  # price outside quotes
            _qrow("2020-01-02T09:05:00", 100.1),
            _qrow("2020-01-02T09:07:00", 100.2),
        ]
        frame, _ = parse_ticks(_csv(rows, header="ts,px,bid,ask,corr"), QCOLUMNS)
        cleaned, report = clean_ticks(frame, SESSION)
        assert report.removed["outside_ath"] == 1
        assert report.removed["zero_price_or_quote"] == 1
        assert report.removed["negative_spread"] == 1
        assert report.removed["excessive_spread"] == 1
        assert report.removed["corrected_trade"] == 1
        assert report.removed["price_outside_quotes"] == 1
        assert len(cleaned) == 3

    def test_accounting_identity(self):
        rows = [_qrow(f"2020-01-02T09:{m:02d}:00", 100.0 + m) for m in range(10)]
        rows += [_qrow("2020-01-02T08:00:00", 99.0), _qrow("2020-01-02T09:30:00", 0.0)]
        frame, _ = parse_ticks(_csv(rows, header="ts,px,bid,ask,corr"), QCOLUMNS)
        _, report = clean_ticks(frame, SESSION)
        assert sum(report.removed.values()) + report.surviving_rows == report.input_rows
        assert report.input_rows == len(frame)

    def test_quote_rules_skipped_without_quotes(self):
        frame, _ = parse_ticks(_csv(["2020-01-02T09:00:00,100.0"]), COLUMNS)
        _, report = clean_ticks(frame, SESSION)
        assert sorted(report.rules_skipped) == sorted(QUOTE_RULES)

    def test_gap_day_excluded_wholesale(self):
        rows = [f"2020-01-02T09:{m:02d}:00,100.0" for m in range(0, 10, 2)]
        rows += ["2020-01-03T09:00:00,100.0", "2020-01-03T09:06:00,100.0"]  # 360 s gap
        frame, _ = parse_ticks(_csv(rows), COLUMNS)
        cleaned, report = clean_ticks(frame, SESSION)
        assert report.removed["gap_day"] == 2
        assert report.excluded_gap_days == [datetime.date(2020, 1, 3)]
        assert set(cleaned["timestamp"].dt.date) == {datetime.date(2020, 1, 2)}

    def test_idempotent_without_quotes(self):
        rows = [f"2020-01-02T09:{m:02d}:00,{100.0 + m}" for m in range(5)]
        rows.append("2020-01-02T18:00:00,90.0")
        frame, _ = parse_ticks(_csv(rows), COLUMNS)
        once, _ = clean_ticks(frame, SESSION)
        twice, report = clean_ticks(once, SESSION)
        assert twice.equals(once)
        assert all(v == 0 for v in report.removed.values())

    def test_clean_report_serializes(self):
        frame, _ = parse_ticks(_csv(["2020-01-02T09:00:00,100.0"]), COLUMNS)
        _, report = clean_ticks(frame, SESSION)
        d = report.to_dict()
        assert d["input_rows"] == 1 and d["surviving_rows"] == 1
        assert set(d["removed"]) == set(CLEAN_RULES)


def _ticks(rows):
    frame, errors = parse_ticks(_csv(rows), COLUMNS)
    assert errors == []
    return frame


class TestAggregate:
    session = SessionSpec(ath_start=datetime.time(9, 0),
                          ath_end=datetime.time(9, 15), max_gap=300.0)

    def test_bar_and_return_counts(self):
        # 900 s session, first trade 1 s after the open: the k=0 boundary has
        # no trade, leaving 30 bars hence 29 returns
        rows = [f"2020-01-02T09:{s // 60:02d}:{s % 60:02d},{100.0 + s / 1e4}"
                for s in range(1, 900)]
        days = aggregate_bars(_ticks(rows), 30.0, self.session)
        assert len(days) == 1
        bars = days[0]
        assert bars.n_bars == 30
        assert len(bars.returns) == 29
        assert bars.first_bar_index == 1

    def test_trade_exactly_on_boundary_closes_that_bar(self):
        rows = ["2020-01-02T09:00:00,100.0", "2020-01-02T09:00:30,101.0",
                "2020-01-02T09:00:31,102.0"]
        bars = aggregate_bars(_ticks(rows), 30.0, self.session)[0]
        assert bars.first_bar_index == 0
        assert bars.closes[0] == 100.0
        assert bars.closes[1] == 101.0   # the 09:00:30 print, not the later one
        assert bars.closes[2] == 102.0

    def test_empty_bars_carry_forward(self):
        rows = ["2020-01-02T09:00:00,100.0", "2020-01-02T09:04:50,105.0"]
        bars = aggregate_bars(_ticks(rows), 30.0, self.session)[0]
        assert np.all(bars.closes[:9] == 100.0)
        assert np.all(bars.returns[:8] == 0.0)
        assert bars.closes[-1] == 105.0

    def test_trailing_partial_bar_dropped(self):
        session = SessionSpec(ath_start=datetime.time(9, 0),
                              ath_end=datetime.time(9, 15, 10), max_gap=300.0)
        rows = ["2020-01-02T09:00:00,100.0", "2020-01-02T09:04:00,101.0",
                "2020-01-02T09:08:00,102.0", "2020-01-02T09:12:00,103.0",
                "2020-01-02T09:15:05,200.0"]
        bars = aggregate_bars(_ticks(rows), 30.0, session)[0]
        # 910 s / 30 s -> boundaries up to 900 s; the 09:15:05 print never closes a bar
        assert bars.n_bars == 31
        assert bars.closes[-1] == 103.0

    def test_returns_consistent_with_closes(self):
        rows = [f"2020-01-02T09:{s // 60:02d}:{s % 60:02d},{100.0 + (s % 7) / 10}"
                for s in range(0, 900, 10)]
        bars = aggregate_bars(_ticks(rows), 30.0, self.session)[0]
        assert bars.closes[0] * math.exp(bars.returns.sum()) == pytest.approx(
            bars.closes[-1], rel=1e-12)

    def test_days_split(self):
        rows = ["2020-01-02T09:00:00,100.0", "2020-01-02T09:01:00,101.0",
                "2020-01-03T09:00:00,200.0", "2020-01-03T09:01:00,201.0"]
        days = aggregate_bars(_ticks(rows), 30.0, self.session)
        assert [b.day for b in days] == [datetime.date(2020, 1, 2),
                                         datetime.date(2020, 1, 3)]

    def test_no_ticks(self):
        frame, _ = parse_ticks(_csv([]), COLUMNS)
        assert aggregate_bars(frame, 30.0, self.session) == []


def _flat_day(day, price):
    return BarSeries(day=day, bar_width=30.0, closes=np.full(4, float(price)))


class TestStitch:
    def test_roll_partition(self):
        d = datetime.date
        front = [_flat_day(d(2020, 1, k), 100 + k) for k in (2, 3, 6)]
        nxt = [_flat_day(d(2020, 1, k), 200 + k) for k in (3, 6, 7)]
        out = stitch_roll(front, nxt, d(2020, 1, 6))
        assert [(b.day, b.closes[0]) for b in out] == [
            (d(2020, 1, 2), 102.0), (d(2020, 1, 3), 103.0),
            (d(2020, 1, 6), 206.0), (d(2020, 1, 7), 207.0)]

    def test_no_return_bridges_the_roll(self):
        d = datetime.date
        front = [_flat_day(d(2020, 1, 2), 100.0)]
        nxt = [_flat_day(d(2020, 1, 3), 500.0)]
        out = stitch_roll(front, nxt, d(2020, 1, 3))
        # the 5x price jump across the roll never appears as a return
        assert all(np.all(b.returns == 0.0) for b in out)

    def test_missing_roll_day_raises(self):
        d = datetime.date
        with pytest.raises(ValueError, match="2020-02-01"):
            stitch_roll([_flat_day(d(2020, 1, 2), 1.0)],
                        [_flat_day(d(2020, 1, 3), 1.0)], d(2020, 2, 1))


def test_bars_to_frame_shape():
    day = _flat_day(datetime.date(2020, 1, 2), 100.0)
    frame = bars_to_frame([day])
    assert list(frame.columns) == ["day", "bar_index", "close", "return"]
    assert len(frame) == day.n_bars
    assert np.isnan(frame["return"].iloc[0])


def test_session_spec_validation():
    with pytest.raises(ValueError):
        SessionSpec(ath_start=datetime.time(17, 0), ath_end=datetime.time(9, 0))
    assert SESSION.duration == 8 * 3600.0
