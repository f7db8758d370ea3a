"""Serialisation of :class:`SyncedPanel` as CSV and as a compact binary file.

Binary layout (little-endian)::

    magic    4 bytes  b"LLPN"
    version  u16      1
    flags    u16      0 (reserved)
    hlen     u32      length of the JSON header
    header   hlen     UTF-8 JSON: instruments, tick_size, n_ticks, date, optional _meta
    tick_times  int64[n]
    bid         int64[n * k]   row-major, integer price ticks
    ask         int64[n * k]
    filled      uint8[n * k]
"""

from __future__ import annotations

import json
import struct
from typing import IO

import numpy as np

from .errors import ParseError
from .tick_sync import SyncedPanel, format_price, price_to_ticks

MAGIC = b"LLPN"
VERSION = 1
_PREFIX = struct.Struct("<4sHHI")


def write_panel_csv(panel: SyncedPanel, fh: IO[str], comment: str | None = None) -> None:
    if comment:
        for line in comment.splitlines():
            fh.write(f"# {line}\n")
    cols = ["tick_time_ns"]
    for name in panel.instruments:
        cols += [f"{name}_bid", f"{name}_ask", f"{name}_filled"]
    fh.write(",".join(cols) + "\n")
    ts = panel.tick_size
    bid, ask, filled = panel.bid.tolist(), panel.ask.tolist(), panel.filled_mask.tolist()
    for t, time in enumerate(panel.tick_times.tolist()):
        cells = [str(time)]
        for j in range(len(panel.instruments)):
            cells += [format_price(bid[t][j], ts), format_price(ask[t][j], ts), str(int(filled[t][j]))]
        fh.write(",".join(cells) + "\n")


def read_panel_csv(fh: IO[str], tick_size: float = 0.2, date: str | None = None) -> SyncedPanel:
    header = None
    rows = []
    for line, text in enumerate(fh.read().splitlines(), 1):
        if not text.strip() or text.startswith("#"):
            continue
        cells = text.strip().split(",")
        if header is None:
            header = cells
            if header[0] != "tick_time_ns" or (len(header) - 1) % 3:
                raise ParseError("bad panel header", line)
            continue
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(cells)}", line)
        try:
            rows.append([int(cells[0])] + [
                int(c) if (i % 3) == 2 else price_to_ticks(float(c), tick_size)
                for i, c in enumerate(cells[1:])])
        except ValueError as exc:
            raise ParseError(str(exc), line) from None
    if header is None:
        raise ParseError("missing header", 1)
    names = [h[:-4] for h in header[1::3]]
    a = np.array(rows, dtype=np.int64).reshape(-1, len(header))
    return SyncedPanel(a[:, 0], names, a[:, 1::3], a[:, 2::3], a[:, 3::3].astype(bool), tick_size, date)


def write_panel_binary(panel: SyncedPanel, fh: IO[bytes], meta: dict | None = None) -> None:
    """``meta`` (provenance such as tool version and config hash) goes into the JSON header."""
    header = {"instruments": list(panel.instruments), "tick_size": panel.tick_size,
              "n_ticks": panel.n_ticks, "date": panel.date}
    if meta:
        header["_meta"] = meta
    header = json.dumps(header, sort_keys=True).encode()
    fh.write(_PREFIX.pack(MAGIC, VERSION, 0, len(header)))
    fh.write(header)
    fh.write(panel.tick_times.astype("<i8").tobytes())
    fh.write(panel.bid.astype("<i8").tobytes())
    fh.write(panel.ask.astype("<i8").tobytes())
    fh.write(panel.filled_mask.astype(np.uint8).tobytes())


def read_panel_binary(fh: IO[bytes]) -> SyncedPanel:
    data = fh.read()
    if len(data) < _PREFIX.size:
        raise ParseError("truncated panel file")
    magic, version, _flags, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ParseError("not a panel file (bad magic)")
    if version != VERSION:
        raise ParseError(f"unsupported panel version {version}")
    off = _PREFIX.size
    header = json.loads(data[off:off + hlen])
    off += hlen
    n, k = header["n_ticks"], len(header["instruments"])
    expected = off + 8 * n + 2 * 8 * n * k + n * k
    if len(data) != expected:
        raise ParseError(f"panel file has {len(data)} bytes, expected {expected}")
    times = np.frombuffer(data, "<i8", n, off)
    off += 8 * n
    bid = np.frombuffer(data, "<i8", n * k, off).reshape(n, k)
    off += 8 * n * k
    ask = np.frombuffer(data, "<i8", n * k, off).reshape(n, k)
    off += 8 * n * k
    filled = np.frombuffer(data, np.uint8, n * k, off).reshape(n, k).astype(bool)
    return SyncedPanel(times.astype(np.int64), header["instruments"], bid.astype(np.int64),
                       ask.astype(np.int64), filled, header["tick_size"], header["date"])
