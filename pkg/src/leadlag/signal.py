"""EMA smoothing, calendar-spread deviation, momentum and forward changes.

``theta(t) = s(t) - EMA_C(s)(t)`` with ``s = F1 - F2`` (mid-quotes), and
``m_i(t) = F_i(t) - EMA_C(F_i)(t)``. By default the EMA at ``t`` already
includes the observation at ``t`` and is seeded with the first observation;
``include_current=False`` uses the EMA through ``t - 1`` instead.
Because the EMA is linear, ``theta == m1 - m2`` up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigurationError, ValidationError
from .tick_sync import SyncedPanel

DEFAULT_CYCLE = 50
DEFAULT_HORIZONS = (1, 2, 4, 8)


def ema_alpha(cycle: int) -> float:
    if cycle < 1:
        raise ConfigurationError("EMA cycle must be a positive integer")
    return 2.0 / (cycle + 1)


@dataclass(frozen=True)
class EmaState:
    cycle: int = DEFAULT_CYCLE
    current: float = 0.0
    initialized: bool = False
    alpha: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", ema_alpha(self.cycle))


def ema_update(state: EmaState, x: float) -> EmaState:
    if not np.isfinite(x):
        raise ValidationError("EMA input must be finite")
    if not state.initialized:
        return replace(state, current=float(x), initialized=True)
    a = state.alpha
    return replace(state, current=a * x + (1 - a) * state.current)


def ema(x, cycle: int = DEFAULT_CYCLE, include_current: bool = True) -> np.ndarray:
    """EMA of a whole series, seeded with ``x[0]``.

    With ``include_current=False`` element ``t`` is the EMA through ``t - 1``
    (element 0 is ``x[0]``).
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return x.copy()
    a = ema_alpha(cycle)
    out, _ = lfilter([a], [1.0, a - 1.0], x, zi=[(1 - a) * x[0]])
    if include_current:
        return out
    return np.concatenate(([x[0]], out[:-1]))


def detrend(x, cycle: int = DEFAULT_CYCLE, include_current: bool = True) -> np.ndarray:
    """``x - EMA(x)``, computed on offsets from ``x[0]`` to limit cancellation."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return x.copy()
    z = x - x[0]
    return z - ema(z, cycle, include_current)


def _index(panel: SyncedPanel, instrument) -> int:
    return int(instrument) if isinstance(instrument, (int, np.integer)) else panel.index(instrument)


def _column(panel: SyncedPanel, instrument) -> np.ndarray:
    return panel.mid[:, _index(panel, instrument)]


def compute_theta(panel: SyncedPanel, cycle: int = DEFAULT_CYCLE, lead=0, lag=1,
                  include_current: bool = True) -> np.ndarray:
    """Calendar-spread deviation in Yuan; ``lead``/``lag`` are column ids or indices."""
    spread = _column(panel, lead) - _column(panel, lag)
    return detrend(spread, cycle, include_current)


def compute_momentum(panel: SyncedPanel, instrument=0, cycle: int = DEFAULT_CYCLE,
                     include_current: bool = True) -> np.ndarray:
    return detrend(_column(panel, instrument), cycle, include_current)


def forward_change(panel: SyncedPanel, h: int, instrument=0) -> np.ndarray:
    """``F(t + h) - F(t)`` in Yuan; NaN for the last ``h`` ticks of the day."""
    if h < 1:
        raise ConfigurationError("horizon must be >= 1")
    mid2 = panel.mid2[:, _index(panel, instrument)]
    out = np.full(len(mid2), np.nan)
    if len(mid2) > h:
        out[:-h] = (mid2[h:] - mid2[:-h]) * (panel.tick_size / 2)
    return out


@dataclass(frozen=True)
class SignalSeries:
    """Per-tick signals for one day.

    ``warmup[t]`` is true for the first ``W`` ticks; consumers must ignore
    those rows (see :meth:`usable`).
    """

    theta: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    fwd: dict
    warmup: np.ndarray
    cycle: int = DEFAULT_CYCLE

    @property
    def n_ticks(self) -> int:
        return len(self.theta)

    @property
    def tick(self) -> np.ndarray:
        return np.arange(self.n_ticks)

    def usable(self, h: int | None = None) -> np.ndarray:
        """Boolean mask of rows past warm-up (and with a defined forward change)."""
        mask = ~self.warmup
        if h is not None:
            mask &= np.isfinite(self.fwd[h])
        return mask


def compute_signals(panel: SyncedPanel, cycle: int = DEFAULT_CYCLE, horizons=DEFAULT_HORIZONS,
                    warmup: int | None = None, include_current: bool = True,
                    lead=0, lag=1) -> SignalSeries:
    if warmup is None:
        warmup = cycle
    theta = compute_theta(panel, cycle, lead, lag, include_current)
    m1 = compute_momentum(panel, lead, cycle, include_current)
    m2 = compute_momentum(panel, lag, cycle, include_current)
    fwd = {int(h): forward_change(panel, int(h), lead) for h in horizons}
    mask = np.arange(panel.n_ticks) < warmup
    for arr in (theta, m1, m2, mask, *fwd.values()):
        arr.setflags(write=False)
    return SignalSeries(theta, m1, m2, fwd, mask, cycle)
