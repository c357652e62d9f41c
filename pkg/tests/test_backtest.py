"""Signals, returns, ledger accounting, portfolio statistics and Monte Carlo."""

from datetime import date, timedelta
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpsmp.backtest import (BUY, HOLD, SELL, AlignmentError, DataError, StrategyConfig, TickerData,
                            daily_return, equal_weights, market_weights, monte_carlo,
                            portfolio_stats, signal, simulate, weighted_return, write_monte_carlo)

D0 = date(2020, 3, 2)
SCORE = st.fractions(0, 1, max_denominator=20)


def days(n):
    return [D0 + timedelta(days=i) for i in range(n)]


def run(prices, scores, **kw):
    return simulate(days(len(prices)), prices, scores, StrategyConfig(**kw))


def fills(ledger):
    return [(e.action, e.price) for e in ledger.fills]


class TestSignal:
    @pytest.mark.parametrize("kind, score, expected", [
        ("fifty_fifty", 0.49, SELL), ("fifty_fifty", 0.51, BUY), ("fifty_fifty", 0.5, BUY),
        ("sixty_forty", 0.5, HOLD), ("sixty_forty", 0.6, BUY), ("sixty_forty", 0.39, SELL),
        ("sixty_forty", 0.4, HOLD)])
    def test_thresholds(self, kind, score, expected):
        assert signal(score, StrategyConfig(kind)) == expected

    @settings(max_examples=200, deadline=None)
    @given(a=st.floats(0, 1), b=st.floats(0, 1), lo=st.floats(0, 1), hi=st.floats(0, 1))
    def test_monotone(self, a, b, lo, hi):
        cfg = StrategyConfig(buy_threshold=max(lo, hi), sell_threshold=min(lo, hi))
        rank = {SELL: 0, HOLD: 1, BUY: 2}
        assert rank[signal(min(a, b), cfg)] <= rank[signal(max(a, b), cfg)]

    @pytest.mark.parametrize("kw", [dict(buy_threshold=0.3, sell_threshold=0.6),
                                    dict(transaction_cost_rate=-0.1), dict(kind="nope"),
                                    dict(shares=0)])
    def test_config_invariants(self, kw):
        with pytest.raises(ValueError):
            StrategyConfig(**kw)

    def test_cli_names(self):
        assert StrategyConfig.from_cli("6040").sell_threshold == 0.4
        assert StrategyConfig.from_cli("hold2").kind == "hold_period"


class TestReturns:
    def test_formulas(self):
        assert daily_return(Fraction(110), Fraction(100)) == Fraction(1, 10)
        assert weighted_return(0, Fraction(1, 10)) == 0
        assert weighted_return(Fraction(1, 2), Fraction(1, 10)) == Fraction(1, 20)

    def test_bad_inputs(self):
        with pytest.raises(DataError):
            daily_return(0, 1)
        with pytest.raises(ValueError):
            weighted_return(1.5, 0.1)

    def test_constant_prices(self):
        lg = run([5.0] * 6, [0.9] * 6)
        assert lg.daily_returns == [0.0] * 5 and lg.weighted_returns == [0.0] * 5

    def test_weighted_returns_follow_position(self):
        lg = run([Fraction(p) for p in (100, 110, 121, 110)], [0.9, 0.9, 0.1, 0.1])
        assert lg.daily_returns == [Fraction(1, 10), Fraction(1, 10), Fraction(-1, 11)]
        assert lg.weighted_returns == [Fraction(1, 10), Fraction(1, 10), 0]


class TestSimulate:
    def test_hand_accounting(self):
        lg = run([Fraction(100), Fraction(110)], [1, 0], transaction_cost_rate=Fraction(3, 1000),
                 shares=1)
        assert lg.profit == Fraction(937, 100)
        assert fills(lg) == [(BUY, 100), (SELL, 110)]
        lg100 = run([Fraction(100), Fraction(110)], [1, 0], transaction_cost_rate=Fraction(3, 1000))
        assert lg100.profit == 937

    def test_hold_band_no_trades(self):
        lg = run([10.0, 12.0, 9.0, 11.0], [0.45, 0.5, 0.55, 0.59], kind="sixty_forty")
        assert lg.n_trades == 0 and lg.profit == 0 and not lg.forced_close

    def test_forced_close(self):
        lg = run([Fraction(10), Fraction(12), Fraction(15)], [0.9, 0.9, 0.9],
                 transaction_cost_rate=0, shares=1)
        assert fills(lg) == [(BUY, 10), (SELL, 15)]
        assert lg.forced_close and lg.events[-1].forced_close and lg.profit == 5

    def test_date_window(self):
        cfg = StrategyConfig(start_date=D0 + timedelta(days=1), end_date=D0 + timedelta(days=2),
                             transaction_cost_rate=0, shares=1)
        lg = simulate(days(4), [1.0, 2.0, 3.0, 4.0], [0.9, 0.9, 0.1, 0.9], cfg)
        assert lg.dates == days(4)[1:3] and fills(lg) == [(BUY, 2.0), (SELL, 3.0)]

    def test_alignment_and_data_errors(self):
        with pytest.raises(AlignmentError):
            simulate(days(3), [1.0, 2.0, 3.0], [0.5, 0.5], StrategyConfig())
        with pytest.raises(AlignmentError):
            simulate(days(3), [1.0, 2.0], [0.5] * 3, StrategyConfig())
        with pytest.raises(DataError):
            simulate(days(2), [1.0, -2.0], [0.5] * 2, StrategyConfig())

    def test_explicit_signals(self):
        lg = simulate(days(3), [1.0, 2.0, 3.0], None, StrategyConfig(transaction_cost_rate=0, shares=1),
                      signals=[BUY, HOLD, SELL])
        assert fills(lg) == [(BUY, 1.0), (SELL, 3.0)]

    def test_hold_signal_first_buy_last_sell(self):
        scores = [0.1, 0.9, 0.1, 0.9, 0.1, 0.9]
        lg = run([Fraction(p) for p in (1, 2, 3, 4, 5, 6)], scores, kind="hold_signal",
                 transaction_cost_rate=0, shares=1)
        assert fills(lg) == [(BUY, 2), (SELL, 5)]

    def test_hold_period_ignores_scores(self):
        lg = run([Fraction(p) for p in (4, 2, 8)], [0.0, 0.0, 0.0], kind="hold_period",
                 transaction_cost_rate=0, shares=1)
        assert fills(lg) == [(BUY, 4), (SELL, 8)] and not lg.forced_close

    @settings(max_examples=1000, deadline=None)
    @given(data=st.lists(st.tuples(st.integers(1, 500), SCORE), min_size=1, max_size=25),
           kind=st.sampled_from(["fifty_fifty", "sixty_forty", "hold_signal", "hold_period"]),
           rate=st.fractions(0, Fraction(1, 50), max_denominator=1000))
    def test_reconciles_and_alternates(self, data, kind, rate):
        prices = [Fraction(p, 4) for p, _ in data]
        lg = run(prices, [s for _, s in data], kind=kind, transaction_cost_rate=rate)
        assert lg.final_cash - lg.initial_cash == lg.profit
        proceeds = sum(e.price * lg.shares - e.cost for e in lg.fills if e.action == SELL)
        outlays = sum(e.price * lg.shares + e.cost for e in lg.fills if e.action == BUY)
        assert lg.profit == proceeds - outlays
        actions = [a for a, _ in fills(lg)]
        assert actions == [BUY, SELL] * (len(actions) // 2)
        assert all(e.position in (0, lg.shares) for e in lg.events)
        assert lg.events[-1].position == 0

    @settings(max_examples=200, deadline=None)
    @given(p0=st.integers(1, 1000), p1=st.integers(1, 1000),
           c=st.fractions(0, Fraction(1, 20), max_denominator=1000))
    def test_buy_and_hold_symbolic(self, p0, p1, c):
        lg = run([Fraction(p0), Fraction(p1)], [1, 1], kind="hold_period",
                 transaction_cost_rate=c)
        ratio = Fraction(p1, p0)
        assert lg.trade_returns == [ratio - 1 - c * (1 + ratio)]
        assert lg.cumulative_trade_return == ratio - 1 - c * (1 + ratio)

    def test_summary_and_csv(self, tmp_path):
        lg = run([10.0, 11.0, 10.5, 12.0], [0.9, 0.1, 0.9, 0.1])
        s = lg.summary()
        assert s["n_trades"] == 4 and s["profit"] == pytest.approx(lg.profit)
        assert {"return", "E(R)", "Std(R)", "sharpe", "sharpe_pct"} <= s.keys()
        lg.write_csv(tmp_path / "l.csv")
        lines = (tmp_path / "l.csv").read_text().splitlines()
        assert lines[0] == "Date,Action,Price,Cost,Position,CashDelta" and len(lines) == 5


class TestPortfolio:
    def test_market_weights(self):
        np.testing.assert_allclose(market_weights([10, 30, 60]), [0.1, 0.3, 0.6], rtol=1e-15)
        assert market_weights([7, 7]) == [0.5, 0.5] and market_weights([3]) == [1.0]
        with pytest.raises(DataError):
            market_weights([1, 0])

    def test_single_ticker_identity(self):
        lg = run([10.0, 11.0, 10.0, 12.0], [0.9, 0.9, 0.9, 0.1])
        st_ = portfolio_stats([lg], [1.0])
        assert st_.expected_return == pytest.approx(np.mean(lg.weighted_returns), rel=1e-15)
        assert st_.total_profit == pytest.approx(lg.profit)

    def test_two_identical_tickers(self):
        lg = run([10.0, 11.0, 10.0, 12.0], [0.9, 0.9, 0.1, 0.9])
        one, two = portfolio_stats([lg], [1.0]), portfolio_stats([lg, lg], equal_weights(2))
        assert two.expected_return == pytest.approx(one.expected_return, rel=1e-12)
        assert two.std_return == pytest.approx(one.std_return, rel=1e-12)

    def test_two_ticker_hand_oracle(self):
        # A long every day: R_A = [0.1, -0.1]; B long only on day 2: R_B = [0, 0.5]
        a = run([100.0, 110.0, 99.0], [0.9, 0.9, 0.9], transaction_cost_rate=0, shares=1)
        b = run([10.0, 10.0, 15.0], [0.1, 0.9, 0.9], transaction_cost_rate=0, shares=1)
        np.testing.assert_allclose(a.weighted_returns, [0.1, -0.1], rtol=1e-12)
        np.testing.assert_allclose(b.weighted_returns, [0.0, 0.5], rtol=1e-12)
        st_ = portfolio_stats([a, b], [0.25, 0.75])
        # combined = [0.025, 0.35]; E(R) = 0.25*0 + 0.75*0.25
        np.testing.assert_allclose(st_.combined_returns, [0.025, 0.35], rtol=1e-12)
        assert st_.expected_return == pytest.approx(0.1875, rel=1e-12)
        assert st_.std_return == pytest.approx(0.325 / np.sqrt(2), rel=1e-12)
        assert st_.total_profit == pytest.approx(-1.0 + 5.0)

    def test_errors(self):
        a = run([1.0, 2.0], [0.9, 0.9])
        b = simulate([D0, D0 + timedelta(days=7)], [1.0, 2.0], [0.9, 0.9], StrategyConfig())
        with pytest.raises(AlignmentError):
            portfolio_stats([a, b], [0.5, 0.5])
        with pytest.raises(AlignmentError):
            portfolio_stats([a], [0.5, 0.5])
        with pytest.raises(ValueError):
            portfolio_stats([a, a], [0.7, 0.7])


def universe(n=8, length=30, seed=0):
    rng = np.random.default_rng(seed)
    return {f"T{i}": TickerData(days(length), list(rng.uniform(50, 150, length)),
                                list(rng.uniform(0, 1, length))) for i in range(n)}


class TestMonteCarlo:
    def test_reproducible_at_string_level(self, tmp_path):
        cfg = StrategyConfig()
        a = monte_carlo(universe(), cfg, runs=20, pick=3, seed=11)
        b = monte_carlo(universe(), cfg, runs=20, pick=3, seed=11)
        assert [repr(r["profit"]) for r in a] == [repr(r["profit"]) for r in b]
        write_monte_carlo(tmp_path / "a.csv", a)
        write_monte_carlo(tmp_path / "b.csv", b)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert monte_carlo(universe(), cfg, runs=20, pick=3, seed=12) != a

    def test_single_run_replays_alone(self):
        many = monte_carlo(universe(), StrategyConfig(), runs=5, pick=3, seed=4)
        one = monte_carlo(universe(), StrategyConfig(), runs=1, pick=3, seed=4)
        assert one[0] == many[0]

    def test_universe_equal_to_pick(self):
        out = monte_carlo(universe(4), StrategyConfig(), runs=6, pick=4, seed=0)
        assert len({(tuple(r["tickers"]), r["profit"]) for r in out}) == 1

    def test_sampling_without_replacement(self):
        for r in monte_carlo(universe(), StrategyConfig(), runs=30, pick=6, seed=2):
            assert len(set(r["tickers"])) == 6

    def test_insufficient_universe(self):
        with pytest.raises(ValueError):
            monte_carlo(universe(3), StrategyConfig(), pick=6)
