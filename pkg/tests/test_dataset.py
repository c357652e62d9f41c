"""Alignment, horizon labeling, date splits, correlations and the dataset archive."""

import itertools
import warnings
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpsmp.dataset import (DEFAULT_TEST_END, DEFAULT_TRAIN_END, DEFAULT_VAL_END, IngestionError,
                           LabeledDataset, TradingCalendar, align, archive_bytes, archive_hash,
                           correlation_matrix, label, load_archive, read_prices, split,
                           write_labeled, write_prices)
from hpsmp.text import DayRecord, ParseError, Tweet


def weekdays(start, n):
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def records(closes, start=date(2020, 3, 2)):
    return [DayRecord(d, c, c + 1, c - 0.5, c, c) for d, c in zip(weekdays(start, len(closes)), closes)]


def closes_from_moves(moves, base=100.0):
    out = [base]
    for m in moves:
        out.append(out[-1] + (1.0 if m else -1.0))
    return out


class TestAlign:
    def test_saturday_tweet_attaches_to_monday(self):
        recs = records([10.0, 11.0], start=date(2020, 3, 6))  # Friday, Monday
        tweets = [Tweet(date(2020, 3, 7), "weekend rally", 3)]
        out = align(recs, tweets)
        assert [r.date for r in out] == [date(2020, 3, 6), date(2020, 3, 9)]
        assert out[0].tokens == [] and out[1].tokens == ["weekend", "rally"]

    def test_same_day_and_empty_days(self):
        recs = records([10.0, 11.0, 12.0])
        out = align(recs, [Tweet(recs[0].date, "a b", 1)])
        assert out[0].tokens == ["a", "b"]
        assert out[1].tokens == [] and out[2].tokens == []

    def test_covid_flag(self):
        recs = records([10.0, 11.0])
        out = align(recs, [Tweet(recs[1].date, "Coronavirus fears", 5)])
        assert [r.covid_flag for r in out] == [False, True]

    def test_duplicate_dates_listed(self):
        recs = records([10.0, 11.0])
        with pytest.raises(IngestionError, match=recs[0].date.isoformat()):
            align(recs + [recs[0]], [])

    def test_tweet_after_last_day_dropped(self, caplog):
        recs = records([10.0])
        out = align(recs, [Tweet(recs[0].date + timedelta(days=1), "late", 1)])
        assert out[0].tokens == []
        assert "dropped" in caplog.text

    @settings(max_examples=60, deadline=None)
    @given(n_days=st.integers(1, 15), offsets=st.lists(st.integers(-3, 25), max_size=30))
    def test_no_day_dropped_no_tweet_duplicated(self, n_days, offsets):
        recs = records(list(np.linspace(10, 20, n_days)))
        first, last = recs[0].date, recs[-1].date
        tweets = [Tweet(first + timedelta(days=o), f"w{i}", 1) for i, o in enumerate(offsets)]
        out = align(recs, tweets)
        assert [r.date for r in out] == [r.date for r in recs]
        attached = [t for r in out for t in r.tokens]
        assert len(attached) == len(set(attached))
        expected = {f"w{i}" for i, o in enumerate(offsets) if first + timedelta(days=o) <= last}
        assert set(attached) == expected
        for r in out:
            for tok in r.tokens:
                tweet_day = first + timedelta(days=offsets[int(tok[1:])])
                assert tweet_day <= r.date
                assert not any(tweet_day <= s.date < r.date for s in recs)


class TestCalendar:
    def test_next_trading_day(self):
        cal = TradingCalendar([date(2020, 3, 6), date(2020, 3, 9)])
        assert cal.next_trading_day(date(2020, 3, 8)) == date(2020, 3, 9)
        assert cal.next_trading_day(date(2020, 3, 6)) == date(2020, 3, 6)
        assert cal.next_trading_day(date(2020, 3, 10)) is None

    def test_rejects_weekend_and_unsorted(self):
        with pytest.raises(IngestionError):
            TradingCalendar([date(2020, 3, 7)])
        with pytest.raises(IngestionError):
            TradingCalendar([date(2020, 3, 9), date(2020, 3, 6)])


class TestLabel:
    @pytest.mark.parametrize("moves, expected", [
        ((1, 1, 1, 1, 1), 1), ((1, 1, 1, 0, 0), 1), ((0, 0, 1, 0, 0), 0)])
    def test_examples(self, moves, expected):
        assert label(records(closes_from_moves(moves))).labels == [expected]

    @pytest.mark.parametrize("horizon", range(1, 7))
    def test_brute_force_over_all_patterns(self, horizon):
        for threshold in range(0, horizon + 2):
            for moves in itertools.product((0, 1), repeat=horizon):
                ds = label(records(closes_from_moves(moves)), horizon, threshold)
                assert ds.labels == [int(sum(moves) >= threshold)], (moves, threshold)

    def test_twelve_days_give_seven_labels(self):
        ds = label(records(list(np.arange(12.0) + 10)))
        assert len(ds) == 7 and len(ds.unlabeled_tail) == 5
        assert all(r.label is None for r in ds.unlabeled_tail)

    def test_equal_closes_are_not_up(self):
        assert label(records([5.0] * 6)).labels == [0]
        assert label(records([5.0] * 6), threshold=0).labels == [1]

    def test_too_few_records_warns(self):
        with pytest.warns(UserWarning, match="horizon"):
            ds = label(records([1.0, 2.0, 3.0]))
        assert len(ds) == 0

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            label(records([1.0, 2.0]), horizon=0)
        with pytest.raises(IngestionError):
            label(list(reversed(records([1.0, 2.0, 3.0]))), horizon=1)


class TestSplit:
    def test_default_boundaries_partition(self):
        start = date(2019, 11, 1)
        days = weekdays(start, 200)
        recs = [DayRecord(d, 1.0, 1.0, 1.0, 1.0, 1.0, label=0) for d in days
                if d <= DEFAULT_TEST_END]
        parts = split(LabeledDataset(recs))
        got = [r.date for p in (parts.train, parts.val, parts.test) for r in p.records]
        assert got == [r.date for r in recs]
        assert max(r.date for r in parts.train.records) <= DEFAULT_TRAIN_END
        assert all(DEFAULT_TRAIN_END < r.date <= DEFAULT_VAL_END for r in parts.val.records)
        assert min(r.date for r in parts.test.records) >= date(2020, 3, 1)

    def test_bad_order(self):
        with pytest.raises(ValueError):
            split(LabeledDataset([]), date(2020, 2, 1), date(2020, 1, 1), date(2020, 3, 1))

    def test_single_day(self):
        rec = DayRecord(date(2019, 5, 6), 1.0, 1.0, 1.0, 1.0, 1.0, label=1)
        with pytest.warns(UserWarning, match="empty"):
            parts = split(LabeledDataset([rec]))
        assert (len(parts.train), len(parts.val), len(parts.test)) == (1, 0, 0)


class TestCorrelation:
    def test_linear_relation_and_itself(self):
        x = np.array([1.0, 4.0, 2.0, 8.0, 5.0])
        recs = [DayRecord(d, xi, 2 * xi + 3, xi - 0.5, xi, xi, volume=2 * xi + 3)
                for d, xi in zip(weekdays(date(2020, 3, 2), 5), x)]
        corr = correlation_matrix(recs, ["close", "volume", "high"])
        np.testing.assert_allclose(corr, np.ones((3, 3)), rtol=0, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(1, 100), min_size=3, max_size=20), st.integers(0, 10**6))
    def test_symmetric_unit_diagonal(self, closes, seed):
        rng = np.random.default_rng(seed)
        recs = [DayRecord(d, c * rng.uniform(0.9, 1.1), c * 1.2, c * 0.8, c, c,
                          covid_flag=bool(rng.integers(2)), label=int(rng.integers(2)))
                for d, c in zip(weekdays(date(2020, 3, 2), len(closes)), closes)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            corr = correlation_matrix(recs)
        finite = np.isfinite(corr)
        np.testing.assert_array_equal(finite, finite.T)
        np.testing.assert_allclose(corr[finite], corr.T[finite], rtol=0, atol=1e-12)
        diag = np.diag(corr)
        assert np.all((diag == 1.0) | np.isnan(diag))
        assert np.all(np.abs(corr[finite]) <= 1 + 1e-12)

    def test_pearson_oracle(self):
        rng = np.random.default_rng(1)
        closes = rng.uniform(10, 20, 30)
        recs = [DayRecord(d, c, c + rng.uniform(0, 2), c - 1, c, c, volume=rng.uniform(1, 9))
                for d, c in zip(weekdays(date(2020, 3, 2), 30), closes)]
        corr = correlation_matrix(recs, ["high", "volume"])
        expected = np.corrcoef([r.high for r in recs], [r.volume for r in recs])
        np.testing.assert_allclose(corr, expected, atol=1e-12)

    def test_zero_variance_is_nan_with_warning(self):
        with pytest.warns(UserWarning, match="covid_flag"):
            corr = correlation_matrix(records([1.0, 2.0, 4.0]), ["adj_close", "covid_flag"])
        assert corr[0, 0] == 1.0
        assert np.isnan(corr[1]).all() and np.isnan(corr[:, 1]).all()

    def test_needs_two_records(self):
        with pytest.raises(ValueError):
            correlation_matrix(records([1.0]))


class TestFiles:
    def test_prices_round_trip(self, tmp_path):
        recs = records([10.5, 11.25, 9.75])
        write_prices(tmp_path / "p.csv", recs)
        back = read_prices(tmp_path / "p.csv")
        assert [(r.date, r.adj_close, r.high) for r in back] == [(r.date, r.adj_close, r.high) for r in recs]

    def test_prices_bad_header_and_row(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("Date,Close\n")
        with pytest.raises(ParseError, match=":1"):
            read_prices(path)
        path.write_text("Date,Open,High,Low,Close,AdjClose,Volume\n2020-03-02,1,2,0.5,1,x,0\n")
        with pytest.raises(ParseError, match=":2"):
            read_prices(path)

    def test_write_labeled(self, tmp_path):
        ds = label(records([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]))
        write_labeled(tmp_path / "l.csv", ds.records + ds.unlabeled_tail)
        lines = (tmp_path / "l.csv").read_text().splitlines()
        assert lines[0] == "Date,AdjClose,CovidFlag,Label,TokenCount"
        assert lines[1].split(",")[3] == "1" and lines[-1].split(",")[3] == ""

    def test_archive_round_trip_and_hash(self, tmp_path):
        recs = align(records([1.0, 2.0, 1.5, 3.0, 2.5, 4.0, 3.5]), [Tweet(date(2020, 3, 2), "covid up", 2)])
        tickers = {"B": label(recs), "A": label(recs, horizon=2)}
        data = archive_bytes(tickers, {"seed": 1})
        assert archive_hash(data) == archive_hash(archive_bytes(dict(reversed(tickers.items())), {"seed": 1}))
        (tmp_path / "d.json").write_bytes(data)
        back = load_archive(tmp_path / "d.json")
        assert back.keys() == tickers.keys()
        for name, ds in tickers.items():
            assert back[name].records == ds.records
            assert back[name].unlabeled_tail == ds.unlabeled_tail
            assert back[name].horizon == ds.horizon
        assert archive_bytes(back, {"seed": 1}) == data

    def test_foreign_archive(self, tmp_path):
        (tmp_path / "x.json").write_text('{"format": "other"}')
        with pytest.raises(ParseError):
            load_archive(tmp_path / "x.json")
