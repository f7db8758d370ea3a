import numpy as np
import pytest

from leadlag.synthgen import GenConfig, generate_day, preset
from leadlag.tick_sync import SyncedPanel, UpdateTable, synchronize


def make_panel(bid, ask=None, spread=1, times=None, names=None, filled=None, date="2024-01-02"):
    bid = np.asarray(bid, dtype=np.int64)
    if bid.ndim == 1:
        bid = bid[:, None]
    ask = bid + spread if ask is None else np.asarray(ask, dtype=np.int64).reshape(bid.shape)
    n, k = bid.shape
    times = np.arange(n, dtype=np.int64) * 500_000_000 if times is None else times
    names = names or [f"F{i + 1}" for i in range(k)]
    filled = np.zeros((n, k), dtype=bool) if filled is None else filled
    return SyncedPanel(times, names, bid, ask, filled, 0.2, date)


def make_updates(rows, instruments=None):
    """rows: (instrument, time, bid_ticks, ask_ticks, cum_volume)."""
    instruments = instruments or sorted({r[0] for r in rows})
    code = [instruments.index(r[0]) for r in rows]
    cols = list(zip(*[(r[1], r[2], r[3], 1, 1, r[4]) for r in rows])) or [[]] * 6
    return UpdateTable(instruments, code, *cols)


@pytest.fixture(scope="session")
def tuned_day():
    cfg = preset("tuned", n_ticks=7200)
    day = generate_day(cfg, 0)
    return day, synchronize(day.updates)


@pytest.fixture
def short_cfg():
    return GenConfig(n_ticks=2400, level_vol=0.2, follower_noise=0.2, lead_vol=0.1)


ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one verdict line per acceptance criterion; printed in the terminal summary."""
    def record(criterion: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        print(ACCEPTANCE_LINES[-1])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
