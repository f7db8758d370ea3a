"""Event-driven backtest of the calendar-spread feedback strategy on the lead contract.

Entry: at tick ``t`` (past warm-up, not the last tick) with
``|theta(t)| >= lambda * price_tick``, the lead contract's quoted spread at
most ``max_spread_ticks`` and room under the position cap, trade one lot
against the deviation: sell at the bid when ``theta > 0``, buy at the ask
when ``theta < 0``. Exit (default): when ``theta`` has come back to zero or
crossed it, at the opposite quote. Everything still open is closed at the
day's last tick. Fees are charged on each side.

Two routes produce the same trades: :class:`FeedbackStrategy` consumes ticks
one at a time and can only see the past, and :func:`run_day` jumps between
candidate ticks with vectorised masks (single-lot configurations only).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ValidationError
from .signal import SignalSeries
from .tick_sync import PRICE_TICK, SyncedPanel

logger = logging.getLogger(__name__)

TRADING_DAYS = 252
DEFAULT_LAMBDA_GRID = tuple(round(0.4 * k, 1) for k in range(1, 11))


@dataclass(frozen=True)
class ExitRule:
    """``zero-cross`` (default), ``horizon:h`` (hold ``h`` ticks) or ``threshold:x``.

    ``threshold:x`` exits once ``sign_at_entry * theta <= x * lambda * tick``;
    ``x = 0`` is the zero-cross rule and ``x = -1`` waits for the opposite threshold.
    """

    kind: str = "zero-cross"
    value: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "ExitRule":
        text = text.strip()
        if text == "zero-cross":
            return cls()
        kind, _, arg = text.partition(":")
        try:
            if kind == "horizon":
                h = int(arg)
                if h < 1:
                    raise ValueError
                return cls("horizon", h)
            if kind == "threshold":
                return cls("threshold", float(arg))
        except ValueError:
            pass
        raise ConfigurationError(f"bad exit rule {text!r}; use zero-cross, horizon:h or threshold:x")

    def __str__(self) -> str:
        if self.kind == "zero-cross":
            return self.kind
        v = int(self.value) if self.kind == "horizon" else self.value
        return f"{self.kind}:{v}"

    @property
    def threshold_frac(self) -> float | None:
        return 0.0 if self.kind == "zero-cross" else (self.value if self.kind == "threshold" else None)


@dataclass(frozen=True)
class StrategyConfig:
    lam: float = 1.2                 # entry threshold, price ticks
    cycle: int = 50
    fee_ticks: float = 0.5           # per side
    max_spread_ticks: float = 2
    max_position: int = 1
    price_tick: float = PRICE_TICK
    exit: ExitRule = field(default_factory=ExitRule)

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigurationError("lambda must be positive")
        if self.fee_ticks < 0:
            raise ConfigurationError("fee_ticks must be >= 0")
        if self.max_position < 1:
            raise ConfigurationError("max_position must be >= 1")
        if isinstance(self.exit, str):
            object.__setattr__(self, "exit", ExitRule.parse(self.exit))

    @property
    def threshold(self) -> float:
        return self.lam * self.price_tick

    @property
    def fee(self) -> float:
        return self.fee_ticks * self.price_tick


@dataclass(frozen=True)
class Trade:
    open_tick: int
    close_tick: int
    side: str                        # "long" | "short"
    open_price: float
    close_price: float
    fees: float
    pnl: float

    @property
    def gross(self) -> float:
        return self.pnl + self.fees


def _make_trade(open_tick, close_tick, sign, open_ticks, close_ticks, cfg: StrategyConfig) -> Trade:
    # sign is the position sign: +1 long, -1 short; prices in integer ticks until here
    gross = sign * (close_ticks - open_ticks) * cfg.price_tick
    fees = 2 * cfg.fee
    return Trade(open_tick, close_tick, "long" if sign > 0 else "short",
                 open_ticks * cfg.price_tick, close_ticks * cfg.price_tick, fees, gross - fees)


@dataclass(frozen=True)
class DayData:
    """What the strategy needs from one day: lead-contract quotes (ticks) and the signal."""

    theta: np.ndarray
    bid: np.ndarray
    ask: np.ndarray
    warmup: np.ndarray
    date: str | None = None

    @classmethod
    def from_panel(cls, panel: SyncedPanel, signals: SignalSeries, lead=0) -> "DayData":
        if len(signals.theta) != panel.n_ticks:
            raise ValidationError(
                f"signals cover {len(signals.theta)} ticks but the panel has {panel.n_ticks}")
        j = lead if isinstance(lead, int) else panel.index(lead)
        return cls(signals.theta, panel.bid[:, j], panel.ask[:, j], signals.warmup, panel.date)

    @property
    def n_ticks(self) -> int:
        return len(self.theta)


class FeedbackStrategy:
    """Tick-by-tick strategy state; ``on_tick`` sees only the current tick's data."""

    def __init__(self, cfg: StrategyConfig):
        self.cfg = cfg
        self.lots: list[tuple[int, int, int, float]] = []   # (open_tick, sign, open_price, theta0)
        self.trades: list[Trade] = []
        self.actions: list[tuple[int, str]] = []

    @property
    def position(self) -> int:
        return sum(lot[1] for lot in self.lots)

    def _should_exit(self, t: int, theta: float, lot) -> bool:
        rule = self.cfg.exit
        if rule.kind == "horizon":
            return t - lot[0] >= rule.value
        entry_sign = -lot[1]
        return entry_sign * theta <= rule.threshold_frac * self.cfg.threshold

    def _close(self, t: int, lot, bid: int, ask: int) -> None:
        price = bid if lot[1] > 0 else ask
        self.trades.append(_make_trade(lot[0], t, lot[1], lot[2], price, self.cfg))
        self.actions.append((t, "close"))

    def on_tick(self, t: int, theta: float, bid: int, ask: int, warmup: bool = False,
                last: bool = False) -> None:
        cfg = self.cfg
        keep = []
        for lot in self.lots:
            if last or self._should_exit(t, theta, lot):
                self._close(t, lot, bid, ask)
            else:
                keep.append(lot)
        self.lots = keep
        if last or warmup or not np.isfinite(theta):
            return
        if abs(theta) < cfg.threshold or ask - bid > cfg.max_spread_ticks:
            return
        sign = -1 if theta > 0 else 1
        if self.lots and self.lots[0][1] != sign:
            return
        if abs(self.position) >= cfg.max_position:
            return
        self.lots.append((t, sign, bid if sign < 0 else ask, theta))
        self.actions.append((t, "short" if sign < 0 else "long"))


def stream_day(day: DayData, cfg: StrategyConfig) -> list[Trade]:
    strat = FeedbackStrategy(cfg)
    theta, bid, ask, warm = (day.theta.tolist(), day.bid.tolist(), day.ask.tolist(),
                             day.warmup.tolist())
    n = day.n_ticks
    for t in range(n):
        strat.on_tick(t, theta[t], bid[t], ask[t], warm[t], t == n - 1)
    if strat.lots:
        raise AssertionError("position left open at the close")
    return strat.trades


def _next(idx: np.ndarray, start: int) -> int | None:
    k = np.searchsorted(idx, start, side="left")
    return int(idx[k]) if k < len(idx) else None


def _jump_trades(day: DayData, cfg: StrategyConfig) -> list[Trade]:
    n = day.n_ticks
    if n == 0:
        return []
    theta, bid, ask = day.theta, day.bid, day.ask
    thr = cfg.threshold
    with np.errstate(invalid="ignore"):
        ok = (~day.warmup) & np.isfinite(theta) & (ask - bid <= cfg.max_spread_ticks)
        ok &= np.abs(theta) >= thr
    ok[n - 1] = False
    entries = np.flatnonzero(ok)
    rule = cfg.exit
    if rule.kind != "horizon":
        x = rule.threshold_frac * thr
        exits = {1: np.flatnonzero(theta <= x), -1: np.flatnonzero(-theta <= x)}
    trades = []
    cursor = 0
    while True:
        t = _next(entries, cursor)
        if t is None:
            break
        entry_sign = 1 if theta[t] > 0 else -1
        if rule.kind == "horizon":
            close = min(t + int(rule.value), n - 1)
        else:
            c = _next(exits[entry_sign], t + 1)
            close = n - 1 if c is None else c
        sign = -entry_sign
        open_px = int(bid[t] if sign < 0 else ask[t])
        close_px = int(bid[close] if sign > 0 else ask[close])
        trades.append(_make_trade(t, close, sign, open_px, close_px, cfg))
        cursor = close
    return trades


@dataclass(frozen=True)
class DayResult:
    date: str | None
    trades: tuple
    final_position: int = 0

    @property
    def n_trades(self) -> int:
        return len(self.trades)

    @property
    def gross_pnl(self) -> float:
        return math.fsum(t.gross for t in self.trades)

    @property
    def net_pnl(self) -> float:
        return math.fsum(t.pnl for t in self.trades)


def run_day(day: DayData | SyncedPanel, signals: SignalSeries | None = None,
            cfg: StrategyConfig | None = None, streaming: bool = False) -> DayResult:
    cfg = cfg or StrategyConfig()
    if isinstance(day, SyncedPanel):
        if signals is None:
            raise ValidationError("signals are required with a panel")
        day = DayData.from_panel(day, signals)
    if streaming or cfg.max_position > 1:
        trades = stream_day(day, cfg)
    else:
        trades = _jump_trades(day, cfg)
    return DayResult(day.date, tuple(trades), 0)


def sharpe_ratio(daily_pnl: Sequence[float]) -> float | None:
    """``mean / stdev * sqrt(252)`` (sample stdev); None when undefined."""
    x = np.asarray(daily_pnl, dtype=float)
    if x.size < 2:
        return None
    sd = x.std(ddof=1)
    if not sd > 0:
        return None
    return float(x.mean() / sd * math.sqrt(TRADING_DAYS))


@dataclass(frozen=True)
class SplitMetrics:
    n_days: int
    n_trades: int
    trades_per_day: float
    pnl_per_day: float                 # Yuan
    pnl_per_trade_yuan: float | None
    pnl_per_trade_ticks: float | None
    sharpe: float | None

    @classmethod
    def of(cls, results: Sequence[DayResult], price_tick: float) -> "SplitMetrics":
        n_trades = sum(r.n_trades for r in results)
        pnl = [r.net_pnl for r in results]
        total = math.fsum(pnl)
        per_trade = total / n_trades if n_trades else None
        return cls(len(results), n_trades, n_trades / len(results) if results else 0.0,
                   total / len(results) if results else 0.0, per_trade,
                   None if per_trade is None else per_trade / price_tick, sharpe_ratio(pnl))


@dataclass(frozen=True)
class BacktestReport:
    days: tuple
    cfg: StrategyConfig
    split_day: int
    in_sample: SplitMetrics
    out_of_sample: SplitMetrics | None

    @property
    def cumulative_pnl(self) -> np.ndarray:
        return np.cumsum([d.net_pnl for d in self.days])

    def daily_rows(self) -> list[dict]:
        cum = self.cumulative_pnl
        return [{"date": d.date, "n_trades": d.n_trades, "net_pnl": d.net_pnl,
                 "cum_pnl": float(c)} for d, c in zip(self.days, cum)]


def run_backtest(days: Sequence[DayData], cfg: StrategyConfig, split_day: int | None = None,
                 streaming: bool = False) -> BacktestReport:
    """Run every day; days ``[:split_day]`` are in-sample, the rest out-of-sample."""
    if not days:
        raise ValidationError("empty corpus")
    split = len(days) if split_day is None else split_day
    if not 0 < split <= len(days):
        raise ConfigurationError(f"split_day {split} outside 1..{len(days)}")
    results = tuple(run_day(d, cfg=cfg, streaming=streaming) for d in days)
    oos = SplitMetrics.of(results[split:], cfg.price_tick) if split < len(days) else None
    return BacktestReport(results, cfg, split, SplitMetrics.of(results[:split], cfg.price_tick), oos)


@dataclass(frozen=True)
class Calibration:
    best: float
    sharpes: dict


def calibrate_lambda(days: Sequence[DayData], cfg: StrategyConfig,
                     grid: Sequence[float] = DEFAULT_LAMBDA_GRID) -> Calibration:
    """Grid point with the best in-sample Sharpe; ties go to the smaller lambda."""
    if not grid:
        raise ConfigurationError("empty lambda grid")
    sharpes = {}
    for lam in sorted(grid):
        results = [run_day(d, cfg=replace(cfg, lam=lam)) for d in days]
        sharpes[lam] = sharpe_ratio([r.net_pnl for r in results])
    valid = {k: v for k, v in sharpes.items() if v is not None}
    if not valid:
        raise ValidationError("Sharpe ratio undefined for every lambda on the grid")
    best = max(valid, key=lambda k: (valid[k], -k))
    return Calibration(best, sharpes)
