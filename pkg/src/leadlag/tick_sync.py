"""Raw limit-order-book streams and the binning/filling transform.

Raw per-instrument level-1 updates arrive a few microseconds apart inside one
exchange update event and events are roughly 500 ms apart. The transform
groups the updates of one event into a single tick stamped with the arrival
time of the first update (binning), then carries each instrument's previous
quote into ticks where it did not update (filling).

Prices are held as integer multiples of the minimum price tick so that
equality tests and increments are exact; conversion to Yuan happens at the
edges (``bid_price``, ``mid`` and friends).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import IO, Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, ParseError, ValidationError

logger = logging.getLogger(__name__)

PRICE_TICK = 0.2
DEFAULT_INTRA_EVENT_GAP_NS = 100_000_000
CSV_HEADER = ("instrument", "recv_time_ns", "bid", "ask", "bid_size", "ask_size", "cum_volume")

# CFFEX timestamps are local (UTC+8); used only to label trading days.
EXCHANGE_TZ = timezone(timedelta(hours=8))


def price_to_ticks(price: float, tick_size: float = PRICE_TICK) -> int:
    ticks = round(price / tick_size)
    if abs(price / tick_size - ticks) > 1e-6:
        raise ValueError(f"price {price!r} is not a multiple of the tick size {tick_size}")
    return int(ticks)


def format_price(ticks, tick_size: float = PRICE_TICK) -> str:
    decimals = max(0, -int(np.floor(np.log10(tick_size) + 1e-9)))
    return f"{ticks * tick_size:.{decimals}f}"


def date_of(recv_time_ns: int) -> str:
    return datetime.fromtimestamp(recv_time_ns / 1e9, tz=EXCHANGE_TZ).date().isoformat()


@dataclass(frozen=True)
class LobUpdate:
    """One level-1 snapshot of one instrument."""

    instrument_id: str
    recv_time: int
    bid_ticks: int
    ask_ticks: int
    bid_size: int
    ask_size: int
    cum_volume: int
    tick_size: float = PRICE_TICK

    @property
    def bid_price(self) -> float:
        return self.bid_ticks * self.tick_size

    @property
    def ask_price(self) -> float:
        return self.ask_ticks * self.tick_size

    @property
    def mid_price(self) -> float:
        return (self.bid_ticks + self.ask_ticks) * self.tick_size / 2


class UpdateTable(Sequence[LobUpdate]):
    """Time-ordered sequence of :class:`LobUpdate`, stored column-wise.

    Indexing and iteration yield ``LobUpdate`` objects; the analysis code
    reads the numpy columns directly. Construction sorts by ``recv_time``
    (stable, so equal timestamps keep input order) and validates the book
    invariants.
    """

    def __init__(self, instruments, code, recv_time, bid, ask, bid_size, ask_size, cum_volume,
                 tick_size=PRICE_TICK, date=None, *, source_rows=None):
        self.instruments = tuple(instruments)
        recv_time = np.asarray(recv_time, dtype=np.int64)
        order = np.argsort(recv_time, kind="stable")
        self.code = np.asarray(code, dtype=np.int64)[order]
        self.recv_time = recv_time[order]
        self.bid = np.asarray(bid, dtype=np.int64)[order]
        self.ask = np.asarray(ask, dtype=np.int64)[order]
        self.bid_size = np.asarray(bid_size, dtype=np.int64)[order]
        self.ask_size = np.asarray(ask_size, dtype=np.int64)[order]
        self.cum_volume = np.asarray(cum_volume, dtype=np.int64)[order]
        self.tick_size = float(tick_size)
        rows = np.arange(1, len(order) + 1) if source_rows is None else np.asarray(source_rows)
        self._validate(rows[order])
        for arr in (self.code, self.recv_time, self.bid, self.ask, self.bid_size, self.ask_size,
                    self.cum_volume):
            arr.setflags(write=False)
        if date is None and len(self.recv_time):
            date = date_of(int(self.recv_time[0]))
        self.date = date

    def _validate(self, rows):
        if len(self.code) and (self.code.min() < 0 or self.code.max() >= len(self.instruments)):
            raise ValidationError("instrument code out of range")
        crossed = np.flatnonzero(self.ask < self.bid)
        if crossed.size:
            i = crossed[0]
            raise ValidationError(
                f"crossed book at record {rows[i]} ({self.instruments[self.code[i]]}): "
                f"bid {format_price(self.bid[i], self.tick_size)} > ask {format_price(self.ask[i], self.tick_size)}")
        negative = np.flatnonzero((self.bid_size < 0) | (self.ask_size < 0))
        if negative.size:
            raise ValidationError(f"negative size at record {rows[negative[0]]}")
        for k, name in enumerate(self.instruments):
            idx = np.flatnonzero(self.code == k)
            back = np.flatnonzero(np.diff(self.cum_volume[idx]) < 0)
            if back.size:
                raise ValidationError(
                    f"cum_volume decreases for {name} at record {rows[idx[back[0] + 1]]}")

    @classmethod
    def from_updates(cls, updates: Sequence[LobUpdate], tick_size=None, date=None) -> "UpdateTable":
        updates = list(updates)
        if tick_size is None:
            tick_size = updates[0].tick_size if updates else PRICE_TICK
        ids = sorted({u.instrument_id for u in updates})
        index = {name: k for k, name in enumerate(ids)}
        cols = np.array([(index[u.instrument_id], u.recv_time, u.bid_ticks, u.ask_ticks, u.bid_size,
                          u.ask_size, u.cum_volume) for u in updates], dtype=np.int64).reshape(-1, 7)
        return cls(ids, *cols.T, tick_size=tick_size, date=date)

    def __len__(self) -> int:
        return len(self.recv_time)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return LobUpdate(self.instruments[self.code[i]], int(self.recv_time[i]), int(self.bid[i]),
                         int(self.ask[i]), int(self.bid_size[i]), int(self.ask_size[i]),
                         int(self.cum_volume[i]), self.tick_size)

    def __iter__(self) -> Iterator[LobUpdate]:
        return (self[i] for i in range(len(self)))

    def select(self, instrument_id: str) -> np.ndarray:
        """Row indices belonging to one instrument."""
        return np.flatnonzero(self.code == self.instruments.index(instrument_id))


def parse_lob_stream(stream, tick_size: float = PRICE_TICK) -> UpdateTable:
    """Parse the day-file CSV format into a time-sorted :class:`UpdateTable`.

    ``stream`` may be bytes, str, or a file object opened in either mode. Malformed
    records raise :class:`ParseError` carrying the 1-based line number;
    crossed books and decreasing ``cum_volume`` raise :class:`ValidationError`.
    """
    if hasattr(stream, "read"):
        stream = stream.read()
    if isinstance(stream, bytes):
        stream = stream.decode("utf-8")

    ids: dict[str, int] = {}
    rows: list[tuple] = []
    lines: list[int] = []
    header_seen = False
    for line, text in enumerate(stream.splitlines(), 1):
        text = text.strip()
        if not text or text.startswith("#"):
            continue
        row = text.split(",")
        if not header_seen:
            if tuple(c.strip() for c in row) != CSV_HEADER:
                raise ParseError(f"expected header {','.join(CSV_HEADER)}", line)
            header_seen = True
            continue
        if len(row) != len(CSV_HEADER):
            raise ParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", line)
        name = row[0].strip()
        if not name:
            raise ParseError("empty instrument id", line)
        try:
            rec = (int(row[1]), price_to_ticks(float(row[2]), tick_size),
                   price_to_ticks(float(row[3]), tick_size), int(row[4]), int(row[5]), int(row[6]))
        except ValueError as exc:
            raise ParseError(str(exc), line) from None
        rows.append((ids.setdefault(name, len(ids)),) + rec)
        lines.append(line)

    names = sorted(ids)
    remap = np.array([names.index(n) for n in ids], dtype=np.int64)
    cols = np.array(rows, dtype=np.int64).reshape(-1, 7)
    code = remap[cols[:, 0]] if len(rows) else cols[:, 0]
    return UpdateTable(names, code, *cols[:, 1:].T, tick_size=tick_size, source_rows=lines)


def write_lob_stream(updates: UpdateTable, fh: IO[str], comment: str | None = None) -> None:
    if comment:
        for line in comment.splitlines():
            fh.write(f"# {line}\n")
    fh.write(",".join(CSV_HEADER) + "\n")
    ts = updates.tick_size
    for k, t, b, a, bs, as_, cv in zip(updates.code.tolist(), updates.recv_time.tolist(),
                                        updates.bid.tolist(), updates.ask.tolist(),
                                        updates.bid_size.tolist(), updates.ask_size.tolist(),
                                        updates.cum_volume.tolist()):
        fh.write(f"{updates.instruments[k]},{t},{format_price(b, ts)},{format_price(a, ts)},"
                 f"{bs},{as_},{cv}\n")


@dataclass(frozen=True)
class EventGroup:
    event_time: int
    updates: Mapping[str, LobUpdate]


class EventGroups(Sequence[EventGroup]):
    """Partition of an :class:`UpdateTable` into update events.

    ``group[i]`` is the event index of update ``i``; ``starts`` holds the
    first update of each event.
    """

    def __init__(self, table: UpdateTable, group: np.ndarray):
        self.table = table
        self.group = group
        self.starts = np.flatnonzero(np.r_[True, np.diff(group) != 0]) if len(group) else group
        self.event_time = table.recv_time[self.starts]

    def __len__(self):
        return len(self.starts)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        lo = self.starts[i]
        hi = self.starts[i + 1] if i + 1 < len(self.starts) else len(self.table)
        ups = {self.table.instruments[self.table.code[j]]: self.table[j] for j in range(lo, hi)}
        return EventGroup(int(self.event_time[i]), ups)

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def bin_events(updates: UpdateTable, intra_event_gap: int = DEFAULT_INTRA_EVENT_GAP_NS) -> EventGroups:
    """Group time-sorted updates into events.

    A new event starts when an update arrives more than ``intra_event_gap``
    nanoseconds after the first update of the current event, or when its
    instrument already has an update in the current event.
    """
    if intra_event_gap <= 0:
        raise ConfigurationError("intra_event_gap must be positive")
    times = updates.recv_time.tolist()
    codes = updates.code.tolist()
    group = [0] * len(times)
    g = -1
    start = None
    seen = 0
    for i, (t, k) in enumerate(zip(times, codes)):
        bit = 1 << k
        if start is None or t - start > intra_event_gap or seen & bit:
            g += 1
            start = t
            seen = 0
        seen |= bit
        group[i] = g
    return EventGroups(updates, np.asarray(group, dtype=np.int64))


@dataclass(frozen=True)
class SyncedPanel:
    """Rectangular tick grid of level-1 quotes for a fixed instrument order.

    ``bid``/``ask`` are integer tick counts of shape ``(n_ticks, n_instruments)``;
    ``filled_mask`` marks cells carried forward from an earlier tick.
    """

    tick_times: np.ndarray
    instruments: tuple
    bid: np.ndarray
    ask: np.ndarray
    filled_mask: np.ndarray
    tick_size: float = PRICE_TICK
    date: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "instruments", tuple(self.instruments))
        for name in ("tick_times", "bid", "ask", "filled_mask"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n, k = self.bid.shape
        if self.ask.shape != (n, k) or self.filled_mask.shape != (n, k) or len(self.tick_times) != n:
            raise ValidationError("panel arrays have inconsistent shapes")
        if k != len(self.instruments):
            raise ValidationError("panel column count does not match instruments")
        if n > 1 and np.any(np.diff(self.tick_times) <= 0):
            raise ValidationError("tick_times must be strictly increasing")

    @property
    def n_ticks(self) -> int:
        return len(self.tick_times)

    def index(self, instrument_id: str) -> int:
        return self.instruments.index(instrument_id)

    @property
    def mid2(self) -> np.ndarray:
        """Mid-quotes in half-tick units (exact integers)."""
        return self.bid + self.ask

    @property
    def mid(self) -> np.ndarray:
        return self.mid2 * (self.tick_size / 2)

    @property
    def bid_price(self) -> np.ndarray:
        return self.bid * self.tick_size

    @property
    def ask_price(self) -> np.ndarray:
        return self.ask * self.tick_size

    def reorder(self, instruments: Sequence[str]) -> "SyncedPanel":
        cols = [self.index(i) for i in instruments]
        return SyncedPanel(self.tick_times, instruments, self.bid[:, cols], self.ask[:, cols],
                           self.filled_mask[:, cols], self.tick_size, self.date)


def fill_missing(groups: EventGroups, instruments: Sequence[str]) -> SyncedPanel:
    """Carry forward the previous tick's quote for instruments absent from an event.

    Ticks before every instrument has been observed are dropped (back-filling
    would look ahead).
    """
    table = groups.table
    instruments = tuple(instruments)
    n, k = len(groups), len(instruments)
    col_of = np.full(len(table.instruments), -1, dtype=np.int64)
    for j, name in enumerate(instruments):
        if name not in table.instruments:
            raise ConfigurationError(f"instrument {name} never observed")
        col_of[table.instruments.index(name)] = j
    keep = col_of[table.code] >= 0
    rows, cols = groups.group[keep], col_of[table.code[keep]]

    observed = np.zeros((n, k), dtype=bool)
    observed[rows, cols] = True
    missing = [instruments[j] for j in range(k) if not observed[:, j].any()]
    if missing:
        raise ConfigurationError(f"instrument(s) never observed: {', '.join(missing)}")

    bid = np.zeros((n, k), dtype=np.int64)
    ask = np.zeros((n, k), dtype=np.int64)
    bid[rows, cols] = table.bid[keep]
    ask[rows, cols] = table.ask[keep]
    src = np.where(observed, np.arange(n)[:, None], -1)
    np.maximum.accumulate(src, axis=0, out=src)
    first = int(np.argmax(observed, axis=0).max())
    src = src[first:]
    colidx = np.broadcast_to(np.arange(k), src.shape)
    return SyncedPanel(groups.event_time[first:], instruments, bid[src, colidx], ask[src, colidx],
                       ~observed[first:], table.tick_size, table.date)


@dataclass(frozen=True)
class LiquidityRanking:
    date: str | None
    ranking: tuple

    @property
    def labels(self) -> dict:
        """Map ``F1``..``Fn`` to instrument ids."""
        return {f"F{i + 1}": name for i, name in enumerate(self.ranking)}


def rank_liquidity(day_updates: UpdateTable | Sequence[LobUpdate]) -> LiquidityRanking:
    """Order instruments by descending end-of-day traded volume (ties: by id)."""
    if not isinstance(day_updates, UpdateTable):
        day_updates = UpdateTable.from_updates(day_updates)
    volume = {}
    for k, name in enumerate(day_updates.instruments):
        idx = day_updates.code == k
        if idx.any():
            volume[name] = int(day_updates.cum_volume[idx].max())
    ranking = tuple(sorted(volume, key=lambda name: (-volume[name], name)))
    return LiquidityRanking(day_updates.date, ranking)


def synchronize(updates: UpdateTable, intra_event_gap: int = DEFAULT_INTRA_EVENT_GAP_NS,
                instruments: Sequence[str] | None = None) -> SyncedPanel:
    """Bin, fill and order columns by liquidity rank (F1 first) unless given."""
    if instruments is None:
        instruments = rank_liquidity(updates).ranking
    return fill_missing(bin_events(updates, intra_event_gap), instruments)
