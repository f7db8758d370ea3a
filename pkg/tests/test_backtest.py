import math
from dataclasses import replace

import numpy as np
import pytest

from leadlag.backtest import (DayData, ExitRule, FeedbackStrategy, StrategyConfig, calibrate_lambda,
                              run_backtest, run_day, sharpe_ratio, stream_day)
from leadlag.errors import ConfigurationError, ValidationError
from leadlag.signal import compute_signals
from leadlag.synthgen import generate_day, preset
from leadlag.tick_sync import synchronize

TICK = 0.2


def _day(theta, bid, ask=None, warm=0, date=None):
    theta = np.asarray(theta, float)
    bid = np.asarray(bid, dtype=np.int64)
    ask = bid + 1 if ask is None else np.asarray(ask, dtype=np.int64)
    return DayData(theta, bid, ask, np.arange(len(theta)) < warm, date)


def _episodes(spec, date=None):
    """spec: (entry level in ticks, gross gain in ticks) per round trip, shorting each time."""
    theta, bid = [0.0], [20000]
    for level, gain in spec:
        theta += [level * TICK, -0.01]
        bid += [20000, 20000 - gain - 1]
    theta.append(0.0)
    bid.append(20000)
    return _day(theta, bid, date=date)


def test_hand_checked_ten_tick_day():
    theta = [0, 0, 5 * TICK, 0.6, 0.3, 0.1, -0.01, 0, 0, 0]
    bid = [20000, 20000, 20000, 20001, 19999, 19998, 19997, 19997, 19997, 19997]
    res = run_day(_day(theta, bid, warm=2), cfg=StrategyConfig(lam=1.2))
    assert res.n_trades == 1
    (t,) = res.trades
    assert (t.open_tick, t.close_tick, t.side) == (2, 6, "short")
    assert t.open_price == pytest.approx(20000 * TICK) and t.close_price == pytest.approx(19998 * TICK)
    assert t.pnl == pytest.approx((20000 - 19998) * TICK - 2 * 0.5 * TICK)


def test_no_signal_no_trades():
    res = run_day(_day(np.full(50, 0.1), np.full(50, 20000)), cfg=StrategyConfig(lam=1.2))
    assert res.n_trades == 0 and res.net_pnl == 0


def test_wide_spread_blocks_entries():
    theta = np.tile([2.0, -2.0], 25)
    day = _day(theta, np.full(50, 20000), ask=np.full(50, 20003))
    assert run_day(day).n_trades == 0
    assert run_day(day, streaming=True).n_trades == 0


def test_long_side_buys_at_ask():
    day = _day([0, -1.0, 0.01, 0], [100, 100, 104, 104], ask=[101, 101, 105, 105])
    (t,) = run_day(day, cfg=StrategyConfig(fee_ticks=0)).trades
    assert t.side == "long" and t.open_price == pytest.approx(101 * TICK)
    assert t.close_price == pytest.approx(104 * TICK) and t.pnl == pytest.approx(3 * TICK)


def test_open_position_closed_at_last_tick():
    day = _day([0, 1.0, 1.0, 1.0], [100, 100, 98, 97])
    (t,) = run_day(day, cfg=StrategyConfig(fee_ticks=0)).trades
    assert t.close_tick == 3 and t.close_price == pytest.approx(98 * TICK)


@pytest.fixture(scope="module")
def tuned_days():
    cfg = preset("tuned", n_ticks=7200)
    out = []
    for d in range(3):
        day = generate_day(cfg, d)
        panel = synchronize(day.updates)
        out.append(DayData.from_panel(panel, compute_signals(panel)))
    return out


@pytest.mark.parametrize("exit_rule", ["zero-cross", "horizon:5", "threshold:0.5", "threshold:-1"])
@pytest.mark.parametrize("lam", [0.8, 2.0])
def test_streaming_and_jump_routes_agree(tuned_days, exit_rule, lam):
    cfg = StrategyConfig(lam=lam, exit=ExitRule.parse(exit_rule))
    for day in tuned_days:
        assert run_day(day, cfg=cfg).trades == run_day(day, cfg=cfg, streaming=True).trades


def test_no_look_ahead(tuned_days):
    day = tuned_days[0]
    cfg = StrategyConfig(lam=1.2)
    k = day.n_ticks // 2
    rng = np.random.default_rng(0)
    theta = day.theta.copy()
    theta[k + 1:-1] = rng.normal(0, 5, day.n_ticks - k - 2)
    corrupt = replace(day, theta=theta)
    base, other = FeedbackStrategy(cfg), FeedbackStrategy(cfg)
    for strat, d in ((base, day), (other, corrupt)):
        for t in range(d.n_ticks):
            strat.on_tick(t, float(d.theta[t]), int(d.bid[t]), int(d.ask[t]), bool(d.warmup[t]), t == d.n_ticks - 1)
    assert [a for a in base.actions if a[0] <= k] == [a for a in other.actions if a[0] <= k]


def test_fee_monotonicity_and_accounting(tuned_days):
    for day in tuned_days:
        cheap = run_day(day, cfg=StrategyConfig(fee_ticks=0.5))
        dear = run_day(day, cfg=StrategyConfig(fee_ticks=1.0))
        assert [(t.open_tick, t.close_tick) for t in cheap.trades] == [(t.open_tick, t.close_tick) for t in dear.trades]
        assert dear.net_pnl <= cheap.net_pnl
        assert abs(math.fsum(t.pnl for t in cheap.trades) - cheap.net_pnl) < 1e-9
        assert all(t.close_tick > t.open_tick for t in cheap.trades)
        assert all(t.close_tick <= day.n_ticks - 1 for t in cheap.trades)
        stream_day(day, StrategyConfig())        # raises if left open at the close


def test_multi_lot_position_cap(tuned_days):
    cfg = StrategyConfig(lam=0.8, max_position=2)
    strat = FeedbackStrategy(cfg)
    day = tuned_days[0]
    for t in range(day.n_ticks):
        strat.on_tick(t, float(day.theta[t]), int(day.bid[t]), int(day.ask[t]), bool(day.warmup[t]), t == day.n_ticks - 1)
        assert abs(strat.position) <= 2
    assert strat.position == 0


def test_report_cumulative_and_determinism(tuned_days):
    a = run_backtest(tuned_days, StrategyConfig(), split_day=2)
    b = run_backtest(tuned_days, StrategyConfig(), split_day=2)
    assert a.daily_rows() == b.daily_rows()
    assert np.allclose(a.cumulative_pnl, np.cumsum([d.net_pnl for d in a.days]))
    assert a.in_sample.n_days == 2 and a.out_of_sample.n_days == 1
    with pytest.raises(ConfigurationError):
        run_backtest(tuned_days, StrategyConfig(), split_day=4)


def test_sharpe_absent_cases():
    assert sharpe_ratio([1.0]) is None
    assert sharpe_ratio([1.0, 1.0, 1.0]) is None
    assert sharpe_ratio([1.0, 3.0]) == pytest.approx(2.0 / math.sqrt(2) * math.sqrt(252))


def test_calibration_single_point_and_ties():
    days = [_episodes([(5, 3), (5, 2)]), _episodes([(5, 1)]), _episodes([(5, 4), (5, 4), (5, 1)])]
    cfg = StrategyConfig(fee_ticks=0)
    assert calibrate_lambda(days, cfg, [2.0]).best == 2.0
    cal = calibrate_lambda(days, cfg, [1.2, 0.8])
    assert cal.sharpes[0.8] == cal.sharpes[1.2] and cal.best == 0.8


def test_calibration_prefers_small_lambda_on_degrading_corpus():
    rng = np.random.default_rng(3)
    days = [_episodes([(0.5, int(rng.integers(2, 5))), (0.9, int(rng.integers(0, 3))),
                       (1.3, -int(rng.integers(1, 4)))]) for _ in range(8)]
    cal = calibrate_lambda(days, StrategyConfig(fee_ticks=0), [0.4, 0.8, 1.2])
    s = cal.sharpes
    assert s[0.4] > s[0.8] > s[1.2] and cal.best == 0.4


def test_calibration_all_undefined():
    with pytest.raises(ValidationError):
        calibrate_lambda([_day(np.zeros(10), np.full(10, 5))], StrategyConfig(), [1.0])


def test_exit_rule_parsing():
    assert str(ExitRule.parse("horizon:4")) == "horizon:4"
    assert ExitRule.parse("threshold:0.5").threshold_frac == 0.5
    for bad in ("horizon:0", "sideways", "threshold:x"):
        with pytest.raises(ConfigurationError):
            ExitRule.parse(bad)


def test_panel_signal_length_mismatch(tuned_day):
    _, panel = tuned_day
    s = compute_signals(panel)
    short = replace(s, theta=s.theta[:-1])
    with pytest.raises(ValidationError):
        DayData.from_panel(panel, short)
