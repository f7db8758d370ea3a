"""Hayashi-Yoshida lagged cross-correlation and lead-lag summary measures.

Lag convention: ``rho(lag)`` pairs the increment of ``x`` over an interval
with the increments of ``y`` observed ``lag`` later, so a peak at a positive
lag means ``x`` moves first (``x`` leads ``y``). For ``y(t) = x(t - 1)`` the
curve peaks at ``+1``.

Increments are not mean-centred, and the normaliser always uses the full sum
of squared increments of each path, so on a common regular grid the
estimator reduces exactly to the uncentred lagged sample correlation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EstimatorUndefined, ValidationError
from .tick_sync import SyncedPanel, UpdateTable

DEFAULT_MAX_LAG = 10
TICK_DURATION_NS = 500_000_000


@dataclass(frozen=True)
class ObservedPath:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValidationError("times and values must be 1-d arrays of equal length")
        if len(times) < 2:
            raise ValidationError("an observed path needs at least two observations")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("observation times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)


def hy_cross_corr(x: ObservedPath, y: ObservedPath, lag=0) -> float:
    """HY correlation of ``x`` with ``y`` shifted by ``lag`` time units.

    ``y``'s observation intervals ``(t_{j-1}, t_j]`` are moved to
    ``(t_{j-1} - lag, t_j - lag]`` and every pair of overlapping half-open
    intervals contributes the product of their increments. Intervals that
    merely touch at an endpoint do not overlap.
    """
    dx = np.diff(x.values)
    dy = np.diff(y.values)
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise EstimatorUndefined("zero variance path: correlation undefined")

    tx = x.times
    ty = y.times - lag
    m = len(ty) - 1
    # y intervals j = 1..m overlapping (tx[i-1], tx[i]] form a contiguous run
    lo = np.maximum(np.searchsorted(ty, tx[:-1], side="right"), 1)
    hi = np.minimum(np.searchsorted(ty, tx[1:], side="left"), m)
    cum = np.concatenate(([0.0], np.cumsum(dy)))
    partial = np.where(hi >= lo, cum[hi] - cum[np.maximum(lo - 1, 0)], 0.0)
    return float(dx @ partial) / math.sqrt(vx * vy)


def lagged_corr(dx: np.ndarray, dy: np.ndarray, lag: int) -> float:
    """Uncentred lagged correlation of two increment series on a common grid.

    ``sum_t dx[t] * dy[t + lag]`` over the overlap, normalised by the full
    sums of squares. Integer inputs give an exact numerator.
    """
    dx = np.asarray(dx)
    dy = np.asarray(dy)
    if len(dx) != len(dy):
        raise ValidationError("increment series must have equal length")
    vx = dx @ dx
    vy = dy @ dy
    if vx == 0 or vy == 0:
        raise EstimatorUndefined("zero variance path: correlation undefined")
    n = len(dx)
    lag = int(lag)
    if abs(lag) >= n:
        num = 0
    elif lag >= 0:
        num = dx[:n - lag] @ dy[lag:]
    else:
        num = dx[-lag:] @ dy[:n + lag]
    return float(num) / math.sqrt(float(vx) * float(vy))


def lag_grid(lags) -> np.ndarray:
    """``int`` L means ``-L..L``; a sequence is used as given."""
    if np.isscalar(lags):
        return np.arange(-int(lags), int(lags) + 1)
    return np.asarray(list(lags), dtype=int)


def llt(lags: Sequence[int], rho: Sequence[float]) -> int:
    """Lag of maximal ``|rho|``; ties go to the smallest ``|lag|``, then the positive one."""
    best = min(zip(lags, rho), key=lambda p: (-abs(p[1]), abs(p[0]), -p[0]))
    return int(best[0])


def llr(lags: Sequence[int], rho: Sequence[float]) -> float:
    """Sum of squared correlations at positive lags over the mirrored negative lags.

    Only lags present with both signs enter. A zero denominator returns
    ``math.inf`` (or ``nan`` when the numerator is zero too); callers should
    check :attr:`CrossCorrCurve.llr_infinite` rather than compare magnitudes.
    """
    table = dict(zip((int(l) for l in lags), rho))
    pos = [l for l in table if l > 0 and -l in table]
    if not pos:
        raise ValidationError("lag grid has no +/- lag pairs")
    num = sum(table[l] ** 2 for l in pos)
    den = sum(table[-l] ** 2 for l in pos)
    if den == 0:
        return math.inf if num > 0 else math.nan
    return num / den


@dataclass(frozen=True)
class CrossCorrCurve:
    lags: np.ndarray
    rho: np.ndarray
    llt: int = field(init=False)
    llc: float = field(init=False)
    llr: float = field(init=False)

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=int)
        rho = np.asarray(self.rho, dtype=float)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "rho", rho)
        t = llt(lags.tolist(), rho.tolist())
        object.__setattr__(self, "llt", t)
        object.__setattr__(self, "llc", float(rho[np.flatnonzero(lags == t)[0]]))
        object.__setattr__(self, "llr", llr(lags.tolist(), rho.tolist()))

    @property
    def llr_infinite(self) -> bool:
        return math.isinf(self.llr)

    def at(self, lag: int) -> float:
        return float(self.rho[np.flatnonzero(self.lags == lag)[0]])

    def summary(self) -> dict:
        return {"llt": self.llt, "llc": self.llc,
                "llr": None if not math.isfinite(self.llr) else self.llr,
                "llr_infinite": self.llr_infinite}


def cross_corr_curve(x: ObservedPath, y: ObservedPath, lags=DEFAULT_MAX_LAG,
                     lag_unit=1) -> CrossCorrCurve:
    """HY curve over a symmetric lag grid; ``lag_unit`` converts lags to time units."""
    grid = lag_grid(lags)
    rho = [hy_cross_corr(x, y, int(l) * lag_unit) for l in grid]
    return CrossCorrCurve(grid, rho)


def increment_curve(dx, dy, lags=DEFAULT_MAX_LAG) -> CrossCorrCurve:
    grid = lag_grid(lags)
    return CrossCorrCurve(grid, [lagged_corr(dx, dy, int(l)) for l in grid])


def panel_curve(panel: SyncedPanel, x: str, y: str, lags=DEFAULT_MAX_LAG) -> CrossCorrCurve:
    """Synchronised-mode curve on exact half-tick mid increments."""
    mid2 = panel.mid2
    return increment_curve(np.diff(mid2[:, panel.index(x)]), np.diff(mid2[:, panel.index(y)]), lags)


def raw_path(updates: UpdateTable, instrument: str) -> ObservedPath:
    """Asynchronous mid-quote path of one instrument from its own updates.

    When an instrument has several updates with the same timestamp the last
    one wins.
    """
    idx = updates.select(instrument)
    times = updates.recv_time[idx]
    mid2 = updates.bid[idx] + updates.ask[idx]
    last = np.r_[times[1:] != times[:-1], True]
    return ObservedPath(times[last], mid2[last] * (updates.tick_size / 2))


def raw_curve(updates: UpdateTable, x: str, y: str, lags=DEFAULT_MAX_LAG,
              tick_ns: int = TICK_DURATION_NS) -> CrossCorrCurve:
    """Curve on the raw asynchronous streams; a lag of one tick is ``tick_ns``."""
    return cross_corr_curve(raw_path(updates, x), raw_path(updates, y), lags, lag_unit=tick_ns)
