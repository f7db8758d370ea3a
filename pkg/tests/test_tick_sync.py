import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_updates
from leadlag.errors import ConfigurationError, ParseError, ValidationError
from leadlag.tick_sync import (EventGroups, bin_events, fill_missing, parse_lob_stream,
                               rank_liquidity, synchronize, write_lob_stream)

HEADER = "instrument,recv_time_ns,bid,ask,bid_size,ask_size,cum_volume\n"
MS = 1_000_000


def test_empty_stream_gives_no_updates():
    assert len(parse_lob_stream(HEADER)) == 0
    assert len(parse_lob_stream(b"")) == 0


def test_records_sorted_by_time():
    text = HEADER + "\n".join([
        "IF03,40,4000.0,4000.2,1,1,5",
        "IF01,10,4000.0,4000.2,1,1,5",
        "IF04,30,4000.0,4000.4,1,1,5",
        "IF02,20,4000.2,4000.4,1,1,5"])
    ups = parse_lob_stream(io.BytesIO(text.encode()))
    assert [u.instrument_id for u in ups] == ["IF01", "IF02", "IF04", "IF03"]
    assert [u.recv_time for u in ups] == [10, 20, 30, 40]
    assert ups[1].bid_ticks == 20001 and ups[1].ask_price == pytest.approx(4000.4)


def test_equal_timestamps_keep_input_order():
    text = HEADER + "B,5,1.0,1.2,1,1,0\nA,5,1.0,1.2,1,1,0\n"
    assert [u.instrument_id for u in parse_lob_stream(text)] == ["B", "A"]


def test_decreasing_cum_volume_rejected():
    text = HEADER + "A,1,1.0,1.2,1,1,10\nA,2,1.0,1.2,1,1,9\n"
    with pytest.raises(ValidationError, match="cum_volume"):
        parse_lob_stream(text)


def test_crossed_book_names_record():
    text = HEADER + "A,1,1.0,1.2,1,1,1\nA,2,1.4,1.2,1,1,1\n"
    with pytest.raises(ValidationError, match="record 3"):
        parse_lob_stream(text)


@pytest.mark.parametrize("line", ["A,1,1.0,1.2,1,1", "A,x,1.0,1.2,1,1,1", "A,1,1.03,1.2,1,1,1"])
def test_malformed_record_reports_line_number(line):
    text = "# comment\n" + HEADER + "A,1,1.0,1.2,1,1,1\n" + line + "\n"
    with pytest.raises(ParseError) as info:
        parse_lob_stream(text)
    assert info.value.line == 4
    assert str(info.value).startswith("line 4")


def test_missing_header_rejected():
    with pytest.raises(ParseError):
        parse_lob_stream("A,1,1.0,1.2,1,1,1\n")


def test_write_then_parse_round_trip():
    ups = make_updates([("A", 3, 5, 6, 1), ("B", 1, 7, 9, 2), ("A", 9, 6, 7, 4)])
    buf = io.StringIO()
    write_lob_stream(ups, buf, comment="hello")
    back = parse_lob_stream(buf.getvalue())
    assert list(back) == list(ups)


def _four(t0, spacing=10_000):
    return [(name, t0 + k * spacing, 100, 101, 0) for k, name in enumerate("ABCD")]


def test_two_events_of_four():
    ups = make_updates(_four(0) + _four(500 * MS))
    groups = bin_events(ups)
    assert len(groups) == 2
    assert [len(g.updates) for g in groups] == [4, 4]
    assert groups[1].event_time == 500 * MS


def test_single_update_single_group():
    groups = bin_events(make_updates([("A", 7, 1, 2, 0)]))
    assert len(groups) == 1 and groups[0].event_time == 7


def test_duplicate_instrument_closes_group():
    rows = [("A", 0, 1, 2, 0), ("B", 10_000, 1, 2, 0), ("C", 20_000, 1, 2, 0), ("D", 30_000, 1, 2, 0),
            ("A", 40_000, 1, 3, 0)]
    groups = bin_events(make_updates(rows))
    assert [len(g.updates) for g in groups] == [4, 1]
    assert groups[1].event_time == 40_000


def test_gap_must_be_positive():
    with pytest.raises(ConfigurationError):
        bin_events(make_updates([("A", 0, 1, 2, 0)]), 0)


def test_fill_without_missing_cells():
    ups = make_updates(_four(0) + _four(500 * MS))
    panel = fill_missing(bin_events(ups), list("ABCD"))
    assert not panel.filled_mask.any()
    assert panel.n_ticks == 2


def test_missing_instrument_carried_forward():
    rows = _four(0) + [(n, 500 * MS + k, 100 + k, 102 + k, 1) for k, n in enumerate("ABC")]
    panel = fill_missing(bin_events(make_updates(rows)), list("ABCD"))
    d = panel.index("D")
    assert panel.filled_mask[1, d] and not panel.filled_mask[1, :d].any()
    assert panel.bid[1, d] == panel.bid[0, d] and panel.ask[1, d] == panel.ask[0, d]


def test_leading_prefix_dropped_until_all_seen():
    rows = []
    for t in range(5):
        for k, name in enumerate("ABCD"):
            if name == "C" and t < 3:
                continue
            rows.append((name, t * 500 * MS + k * 10_000, 100 + t, 101 + t, t))
    panel = fill_missing(bin_events(make_updates(rows)), list("ABCD"))
    assert panel.n_ticks == 2
    assert panel.tick_times[0] == 3 * 500 * MS
    assert panel.bid[:, 0].tolist() == [103, 104]


def test_never_observed_instrument_is_config_error():
    with pytest.raises(ConfigurationError):
        fill_missing(bin_events(make_updates(_four(0))), list("ABCDE"))


def test_liquidity_ranking_by_volume():
    rows = [("IF01", 1, 1, 2, 60_200), ("IF02", 2, 1, 2, 21_900), ("IF03", 3, 1, 2, 1_000),
            ("IF04", 4, 1, 2, 3_000)]
    r = rank_liquidity(make_updates(rows))
    assert r.ranking == ("IF01", "IF02", "IF04", "IF03")
    assert r.labels["F1"] == "IF01"


def test_liquidity_ties_lexicographic_and_order_independent():
    rows = [("B", 1, 1, 2, 5), ("A", 2, 1, 2, 5), ("C", 3, 1, 2, 9)]
    assert rank_liquidity(make_updates(rows)).ranking == ("C", "A", "B")
    assert rank_liquidity(make_updates(rows[::-1])).ranking == ("C", "A", "B")
    assert rank_liquidity(list(make_updates(rows))).ranking == ("C", "A", "B")


# -- properties over random streams -----------------------------------------------------------

@st.composite
def streams(draw):
    n_events = draw(st.integers(1, 25))
    names = "ABCD"
    rows, vol = [], {n: 0 for n in names}
    for e in range(n_events):
        present = draw(st.lists(st.sampled_from(names), unique=True, min_size=1 if e else 4, max_size=4))
        if e == 0:
            present = list(names)
        offsets = draw(st.permutations(range(len(present))))
        for name, off in zip(present, offsets):
            bid = draw(st.integers(1000, 1010))
            vol[name] += draw(st.integers(0, 3))
            rows.append((name, e * 500 * MS + off * 7_000, bid, bid + draw(st.integers(0, 3)), vol[name]))
    return rows, n_events


@settings(max_examples=60, deadline=None)
@given(streams())
def test_grouping_is_partition(data):
    rows, n_events = data
    ups = make_updates(rows)
    groups = bin_events(ups)
    assert len(groups) == n_events
    seen = sorted((u.instrument_id, u.recv_time) for g in groups for u in g.updates.values())
    assert seen == sorted((u.instrument_id, u.recv_time) for u in ups)
    for g in groups:
        times = [u.recv_time for u in g.updates.values()]
        assert g.event_time == min(times) and max(times) - min(times) <= 100 * MS


@settings(max_examples=60, deadline=None)
@given(streams())
def test_panel_alignment_with_latest_observation(data):
    rows, _ = data
    ups = make_updates(rows)
    panel = synchronize(ups, instruments=list("ABCD"))
    for t, when in enumerate(panel.tick_times):
        for j, name in enumerate(panel.instruments):
            obs = [u for u in ups if u.instrument_id == name and u.recv_time < when + 100 * MS]
            assert panel.bid[t, j] == obs[-1].bid_ticks and panel.ask[t, j] == obs[-1].ask_ticks
    assert np.allclose(panel.mid, (panel.bid_price + panel.ask_price) / 2, rtol=0, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.integers(990, 1010), min_size=3, max_size=3), min_size=1, max_size=20))
def test_complete_stream_round_trip_and_idempotent_fill(mids):
    rows = [(name, t * 500 * MS + k * 9_000, m, m + 1, t)
            for t, row in enumerate(mids) for k, (name, m) in enumerate(zip("ABC", row))]
    panel = synchronize(make_updates(rows), instruments=list("ABC"))
    assert panel.bid.tolist() == mids
    assert not panel.filled_mask.any()
    # re-binning the panel's own cells gives the same panel back
    again = [(name, int(t) + k * 9_000, int(panel.bid[i, k]), int(panel.ask[i, k]), i)
             for i, t in enumerate(panel.tick_times) for k, name in enumerate(panel.instruments)]
    panel2 = synchronize(make_updates(again), instruments=list("ABC"))
    assert np.array_equal(panel2.bid, panel.bid) and np.array_equal(panel2.tick_times, panel.tick_times)
