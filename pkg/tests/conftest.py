"""Shared fixtures and helpers for the test suite."""

import datetime

import numpy as np
import pytest

from epsdd.market_data import BarSeries
from epsdd.null_model import SeededGenerator


def rng(seed, stream=0):
    return SeededGenerator(seed, stream).generator()


def make_day(returns, day=datetime.date(2020, 1, 2), bar_width=30.0,
             first_close=100.0):
    """Build a BarSeries from a log-return sequence."""
    returns = np.asarray(returns, dtype=np.float64)
    closes = first_close * np.exp(np.concatenate([[0.0], np.cumsum(returns)]))
    return BarSeries(day=day, bar_width=bar_width, closes=closes)


def random_walk_day(seed, n=240, sigma=1e-3, day=datetime.date(2020, 1, 2),
                    stream=0):
    return make_day(rng(seed, stream).normal(0.0, sigma, n), day=day)


@pytest.fixture
def worked_returns():
    """The twelve-step percentage return sequence of the running example,
    converted to log-returns."""
    pct = [0.8, -5.0, -3.0, -10.0, -2.0, 0.01, -8.0, -13.0, -3.0, -4.0,
           -2.01, 1.2]
    return np.log1p(np.asarray(pct) / 100.0)
