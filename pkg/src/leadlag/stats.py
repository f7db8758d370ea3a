"""Daily summary metrics per instrument: volume, quoted spread, realised volatility."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tick_sync import SyncedPanel, UpdateTable

BUCKET_NS = 5 * 60 * 1_000_000_000
TRADING_DAYS = 252


@dataclass(frozen=True)
class DailySummary:
    date: str | None
    instrument_id: str
    volume: int
    avg_spread: float
    ann_vol: float | None
    avg_abs_mid_change: float

    def as_row(self) -> dict:
        return {"date": self.date, "instrument": self.instrument_id, "volume": self.volume,
                "avg_spread": self.avg_spread, "ann_vol": self.ann_vol,
                "avg_abs_mid_change": self.avg_abs_mid_change}


def annualized_vol(times, mids, bucket_ns: int = BUCKET_NS) -> float | None:
    """``sqrt(252 * sum r^2)`` over log mid returns between bucket-end samples.

    Buckets are aligned to the first tick; the last (possibly partial)
    bucket ends at the last tick. None when the day spans less than one bucket.
    """
    times = np.asarray(times, dtype=np.int64)
    mids = np.asarray(mids, dtype=float)
    if len(times) < 2 or times[-1] - times[0] < bucket_ns:
        return None
    edges = np.arange(times[0] + bucket_ns, times[-1], bucket_ns)
    # last observation at or before each edge, then the close
    idx = np.searchsorted(times, edges, side="right") - 1
    samples = np.concatenate(([mids[0]], mids[idx], [mids[-1]]))
    if np.any(samples <= 0):
        raise ValueError("log returns need positive prices")
    r = np.diff(np.log(samples))
    return math.sqrt(TRADING_DAYS * float(r @ r))


def daily_summary(panel: SyncedPanel, updates: UpdateTable | None = None,
                  bucket_ns: int = BUCKET_NS) -> list[DailySummary]:
    out = []
    mid = panel.mid
    spread = (panel.ask - panel.bid) * panel.tick_size
    for j, name in enumerate(panel.instruments):
        volume = 0
        if updates is not None:
            idx = updates.select(name)
            volume = int(updates.cum_volume[idx].max()) if idx.size else 0
        dm = np.abs(np.diff(panel.mid2[:, j])) * (panel.tick_size / 2)
        out.append(DailySummary(
            panel.date, name, volume, float(spread[:, j].mean()),
            annualized_vol(panel.tick_times, mid[:, j], bucket_ns),
            float(dm.mean()) if dm.size else 0.0))
    return out
