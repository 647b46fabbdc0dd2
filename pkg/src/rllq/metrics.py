"""Replication averaging and log-log slope fits for MSE and regret curves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class AggregateSeries:
    episodes: np.ndarray
    mean_sq_error: np.ndarray
    mean_cum_regret: np.ndarray
    replications: int


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    window: tuple[int, int]
    residual_rms: float


def aggregate(records: Sequence) -> AggregateSeries:
    """Average squared error and cumulative regret over replications.

    Sums run in the given (replication-index) order, so the result is
    bit-reproducible for a fixed ordering.
    """
    if len(records) == 0:
        raise ValueError("need at least one replication")
    n = len(records[0].episode)
    for r in records:
        if len(r.episode) != n:
            raise ValueError(f"replications have mismatched lengths ({len(r.episode)} vs {n})")
    sq = np.zeros(n)
    cum = np.zeros(n)
    for r in records:
        sq += r.sq_error
        cum += np.cumsum(r.regret_increment)
    R = len(records)
    return AggregateSeries(
        episodes=np.asarray(records[0].episode).copy(),
        mean_sq_error=sq / R,
        mean_cum_regret=cum / R,
        replications=R,
    )


def loglog_slope(y, n=None, window: tuple[int, int] | None = None) -> SlopeFit:
    """OLS of log10(y) on log10(n) restricted to lo <= n <= hi.

    ``n`` defaults to 1..len(y); ``window`` defaults to the full range.
    """
    y = np.asarray(y, dtype=float)
    n = np.arange(1, len(y) + 1) if n is None else np.asarray(n, dtype=float)
    lo, hi = window if window is not None else (n.min(), n.max())
    mask = (n >= lo) & (n <= hi)
    if mask.sum() < 2:
        raise ValueError(f"window [{lo}, {hi}] holds fewer than two points")
    yw = y[mask]
    if not np.all(yw > 0) or not np.all(np.isfinite(yw)):
        raise ValueError("log-log fit needs finite, strictly positive values in the window")
    lx = np.log10(n[mask])
    ly = np.log10(yw)
    xm, ym = lx.mean(), ly.mean()
    sxx = np.sum((lx - xm) ** 2)
    slope = float(np.sum((lx - xm) * (ly - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = ly - (intercept + slope * lx)
    return SlopeFit(slope, intercept, (int(lo), int(hi)), float(np.sqrt(np.mean(resid**2))))
