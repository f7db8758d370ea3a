"""Block bootstrap of lead-lag measures on one synchronised day.

The day's tick increments are partitioned into consecutive fixed-length time
blocks. A resample draws as many blocks as the day has, with replacement, and
concatenates their increments in draw order; prices are rebuilt by
cumulating those increments from the day's first quote. An identity draw
therefore reproduces the original panel exactly, and no increment ever spans
two non-adjacent original ticks.

For the lead-lag measures only integer sufficient statistics are needed:
within-block lagged products, seam cross products between a block's tail and
the next block's head, and per-block sums of squares. The fast path sums
those with integer arithmetic, so it is bit-identical to rebuilding each
resampled panel and running the estimator on it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, EstimatorUndefined, ValidationError
from .estimators import DEFAULT_MAX_LAG, CrossCorrCurve, lag_grid, panel_curve
from .tick_sync import SyncedPanel

logger = logging.getLogger(__name__)

NS_PER_MINUTE = 60 * 1_000_000_000
MEASURES = ("LLR", "LLT", "LLC")


@dataclass(frozen=True)
class BootstrapConfig:
    block_minutes: float = 10
    n_resamples: int = 2000
    seed: int = 0
    lags: int = DEFAULT_MAX_LAG

    def __post_init__(self):
        if self.block_minutes <= 0:
            raise ConfigurationError("block_minutes must be positive")
        if self.n_resamples < 1:
            raise ConfigurationError("n_resamples must be >= 1")

    @property
    def block_ns(self) -> int:
        return int(round(self.block_minutes * NS_PER_MINUTE))


def quantile(samples, q: float) -> float:
    """Linear-interpolation quantile: ``s[k] + f * (s[k+1] - s[k])`` with ``h = (n-1) q``.

    Same as numpy's default method, but infinite samples are allowed: equal
    neighbours return themselves, and an infinite upper neighbour gives inf.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0 or np.isnan(s).any():
        raise ValidationError("quantile of an empty or NaN-containing sample")
    h = (s.size - 1) * q
    k = int(math.floor(h))
    f = h - k
    if f == 0 or s[k] == s[k + 1]:
        return float(s[k])
    if math.isinf(s[k + 1]):
        return math.inf
    return float(s[k] + f * (s[k + 1] - s[k]))


@dataclass(frozen=True)
class BootstrapResult:
    measure_name: str
    samples: np.ndarray
    q05: float
    q50: float
    q95: float
    flag_llr_q05_lt_1: bool | None = None
    flag_llt_q05_lt_1: bool | None = None
    n_redraws: int = 0

    @classmethod
    def from_samples(cls, name: str, samples, n_redraws: int = 0) -> "BootstrapResult":
        samples = np.asarray(samples, dtype=float)
        samples.setflags(write=False)
        q05, q50, q95 = (quantile(samples, q) for q in (0.05, 0.5, 0.95))
        flags = {}
        if name == "LLR":
            flags["flag_llr_q05_lt_1"] = q05 < 1
        elif name == "LLT":
            flags["flag_llt_q05_lt_1"] = q05 < 1
        return cls(name, samples, q05, q50, q95, n_redraws=n_redraws, **flags)

    def summary(self) -> dict:
        def num(v):
            return None if not math.isfinite(v) else v
        out = {"measure": self.measure_name, "n": int(self.samples.size),
               "q05": num(self.q05), "q50": num(self.q50), "q95": num(self.q95),
               "q05_infinite": math.isinf(self.q05), "redraws": self.n_redraws}
        if self.flag_llr_q05_lt_1 is not None:
            out["flag_llr_q05_lt_1"] = bool(self.flag_llr_q05_lt_1)
        if self.flag_llt_q05_lt_1 is not None:
            out["flag_llt_q05_lt_1"] = bool(self.flag_llt_q05_lt_1)
        return out


def day_key(panel: SyncedPanel) -> int:
    """Stable integer identifying the panel's day for RNG keying."""
    if panel.date:
        return int(panel.date.replace("-", ""))
    return int(panel.tick_times[0]) if panel.n_ticks else 0


def block_ids(panel: SyncedPanel, cfg: BootstrapConfig) -> tuple[np.ndarray, int]:
    """Block number of every increment (``t - 1 -> t``), keyed by the end tick's time."""
    if panel.n_ticks < 3:
        raise ConfigurationError("panel too short to bootstrap")
    raw = (panel.tick_times[1:] - panel.tick_times[0]) // cfg.block_ns
    _, ids = np.unique(raw, return_inverse=True)
    n_blocks = int(ids.max()) + 1
    if n_blocks < 2:
        raise ConfigurationError(f"block length {cfg.block_minutes} min leaves fewer than 2 blocks")
    return ids, n_blocks


def draw_blocks(n_blocks: int, seed: int, key: int, index: int, attempt: int = 0) -> np.ndarray:
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, key, index, attempt])
    return rng.integers(0, n_blocks, size=n_blocks)


def block_resample(panel: SyncedPanel, cfg: BootstrapConfig, draw_index) -> SyncedPanel:
    """Resampled panel.

    ``draw_index`` is either a resample number (blocks drawn from the keyed
    RNG) or an explicit sequence of block numbers.
    """
    ids, n_blocks = block_ids(panel, cfg)
    if np.isscalar(draw_index):
        draw = draw_blocks(n_blocks, cfg.seed, day_key(panel), int(draw_index))
    else:
        draw = np.asarray(draw_index, dtype=np.int64)
        if draw.size == 0 or draw.min() < 0 or draw.max() >= n_blocks:
            raise ValidationError("explicit draw references unknown blocks")
    order = np.argsort(ids, kind="stable")
    starts = np.searchsorted(ids[order], np.arange(n_blocks + 1))
    inc = np.concatenate([order[starts[b]:starts[b + 1]] for b in draw])
    end = inc + 1

    def rebuild(x):
        d = np.diff(x, axis=0)[inc]
        return np.vstack([x[:1], x[:1] + np.cumsum(d, axis=0)])

    dt = np.diff(panel.tick_times)[inc]
    times = panel.tick_times[0] + np.concatenate(([0], np.cumsum(dt)))
    filled = np.vstack([panel.filled_mask[:1], panel.filled_mask[end]])
    return SyncedPanel(times, panel.instruments, rebuild(panel.bid), rebuild(panel.ask), filled,
                       panel.tick_size, panel.date)


@dataclass
class _BlockStats:
    """Integer sufficient statistics for the lagged correlation of one pair."""

    lags: np.ndarray
    within: np.ndarray      # (n_blocks, n_lags)
    seam: np.ndarray        # (n_blocks, n_blocks, n_lags): block a followed by block b
    vx: np.ndarray
    vy: np.ndarray
    n_blocks: int = field(init=False)

    def __post_init__(self):
        self.n_blocks = len(self.vx)

    def rho(self, draws: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Correlations for each row of ``draws`` plus a defined-ness mask."""
        num = self.within[draws].sum(axis=1)
        num += self.seam[draws[:, :-1], draws[:, 1:]].sum(axis=1)
        vx = self.vx[draws].sum(axis=1)
        vy = self.vy[draws].sum(axis=1)
        ok = (vx > 0) & (vy > 0)
        den = np.sqrt(vx.astype(float) * vy.astype(float))
        with np.errstate(invalid="ignore", divide="ignore"):
            rho = num.astype(float) / den[:, None]
        return rho, ok


def _block_stats(dx: np.ndarray, dy: np.ndarray, ids: np.ndarray, n_blocks: int,
                 lags: np.ndarray) -> _BlockStats | None:
    """None when some block is not longer than the largest lag (use the direct path)."""
    max_lag = int(np.abs(lags).max())
    counts = np.bincount(ids, minlength=n_blocks)
    if counts.min() <= max_lag:
        return None
    order = np.argsort(ids, kind="stable")
    starts = np.concatenate(([0], np.cumsum(counts)))
    within = np.zeros((n_blocks, len(lags)), dtype=np.int64)
    head_x = np.zeros((n_blocks, max_lag + 1), dtype=np.int64)
    head_y = np.zeros_like(head_x)
    tail_x = np.zeros_like(head_x)   # tail_x[b, j] = j-th increment from the end (1-based j)
    tail_y = np.zeros_like(head_x)
    for b in range(n_blocks):
        seg = order[starts[b]:starts[b + 1]]
        bx, by = dx[seg], dy[seg]
        n = len(seg)
        for k, lag in enumerate(lags.tolist()):
            if lag >= 0:
                within[b, k] = bx[:n - lag] @ by[lag:]
            else:
                within[b, k] = bx[-lag:] @ by[:n + lag]
        head_x[b, :max_lag] = bx[:max_lag]
        head_y[b, :max_lag] = by[:max_lag]
        tail_x[b, 1:] = bx[::-1][:max_lag]
        tail_y[b, 1:] = by[::-1][:max_lag]
    seam = np.zeros((n_blocks, n_blocks, len(lags)), dtype=np.int64)
    for k, lag in enumerate(lags.tolist()):
        for j in range(1, abs(lag) + 1):
            if lag > 0:
                seam[:, :, k] += np.outer(tail_x[:, j], head_y[:, lag - j])
            else:
                seam[:, :, k] += np.outer(tail_y[:, j], head_x[:, -lag - j])
    vx = np.zeros(n_blocks, dtype=np.int64)
    vy = np.zeros(n_blocks, dtype=np.int64)
    np.add.at(vx, ids, dx * dx)
    np.add.at(vy, ids, dy * dy)
    return _BlockStats(lags, within, seam, vx, vy)


def _curve_measures(curve: CrossCorrCurve) -> dict:
    return {"LLR": curve.llr, "LLT": float(curve.llt), "LLC": curve.llc}


def _measures_rows(lags: np.ndarray, rho: np.ndarray) -> dict:
    """Row-wise LLT, LLC and LLR with the same tie rule and summation order as
    :class:`CrossCorrCurve`, so results agree bit for bit."""
    lag_list = lags.tolist()
    pref = sorted(range(len(lag_list)), key=lambda k: (abs(lag_list[k]), -lag_list[k]))
    best = np.asarray(pref)[np.argmax(np.abs(rho[:, pref]), axis=1)]
    rows = np.arange(len(rho))
    col = {l: k for k, l in enumerate(lag_list)}
    num = np.zeros(len(rho))
    den = np.zeros(len(rho))
    for l in lag_list:
        if l > 0 and -l in col:
            num = num + rho[:, col[l]] ** 2
            den = den + rho[:, col[-l]] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        llr = np.where(den == 0, np.where(num > 0, np.inf, np.nan), num / den)
    return {"LLR": llr, "LLT": lags[best].astype(float), "LLC": rho[rows, best]}


def bootstrap_pair(panel: SyncedPanel, pair, cfg: BootstrapConfig | None = None,
                   fast: bool = True) -> dict[str, BootstrapResult]:
    """LLR, LLT and LLC distributions from one shared set of block draws.

    A resample on which the correlation is undefined (a zero-variance path,
    or LLR of the form 0/0) is redrawn with the next attempt counter; more
    than ``10 * n_resamples`` draws in total raises :class:`EstimatorUndefined`.
    """
    cfg = cfg or BootstrapConfig()
    x, y = pair
    ix, iy = panel.index(x), panel.index(y)
    ids, n_blocks = block_ids(panel, cfg)
    lags = lag_grid(cfg.lags)
    mid2 = panel.mid2
    dx, dy = np.diff(mid2[:, ix]), np.diff(mid2[:, iy])
    stats = _block_stats(dx, dy, ids, n_blocks, lags) if fast else None
    key = day_key(panel)

    def evaluate(draws: np.ndarray) -> list[dict | None]:
        if stats is not None:
            rho, ok = stats.rho(draws)
            m = _measures_rows(lags, np.where(ok[:, None], rho, 0.0))
            return [{k: float(v[i]) for k, v in m.items()} if good else None
                    for i, good in enumerate(ok.tolist())]
        out = []
        for d in draws:
            try:
                out.append(_curve_measures(panel_curve(block_resample(panel, cfg, d), x, y, lags)))
            except EstimatorUndefined:
                out.append(None)
        return out

    budget = 10 * cfg.n_resamples
    used = cfg.n_resamples
    values: list[dict | None] = evaluate(
        np.array([draw_blocks(n_blocks, cfg.seed, key, r) for r in range(cfg.n_resamples)]))
    redraws = 0
    attempt = 0
    while True:
        bad = [r for r, v in enumerate(values) if v is None or math.isnan(v["LLR"])]
        if not bad:
            break
        attempt += 1
        used += len(bad)
        if used > budget:
            raise EstimatorUndefined(
                f"bootstrap gave up after {budget} draws: measure undefined on too many resamples")
        redraws += len(bad)
        fresh = evaluate(np.array([draw_blocks(n_blocks, cfg.seed, key, r, attempt) for r in bad]))
        for r, v in zip(bad, fresh):
            values[r] = v
    if redraws:
        logger.info("bootstrap %s/%s on %s: %d resamples redrawn", x, y, panel.date, redraws)
    return {m: BootstrapResult.from_samples(m, [v[m] for v in values], redraws) for m in MEASURES}


def bootstrap_measure(panel: SyncedPanel, pair, cfg: BootstrapConfig | None = None,
                      measure: str = "LLR", fast: bool = True) -> BootstrapResult:
    if measure not in MEASURES:
        raise ConfigurationError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    return bootstrap_pair(panel, pair, cfg, fast)[measure]
