"""Tokenizer, vocabulary, embedding files and day-sequence embedding."""

import json
from collections import Counter
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpsmp.autodiff import Tensor
from hpsmp.text import (DayRecord, EmbeddingTable, ParseError, PriceNormalizer, Vocabulary,
                        build_vocab, embed_day, embed_sequence, load_embeddings, read_tweets,
                        tokenize)

WORDS = st.lists(st.lists(st.sampled_from("abcdefgh"), max_size=8), max_size=12)


class TestTokenize:
    @pytest.mark.parametrize("text, expected", [
        ("DOW surges!", ["dow", "surges"]),
        ("", []),
        ("#Covid19 @user http://x.co", ["covid19"]),
        ("Stocks -- up 3%... www.news.com/a?b", ["stocks", "up", "3"]),
    ])
    def test_rules(self, text, expected):
        assert tokenize(text) == expected

    @settings(max_examples=100, deadline=None)
    @given(st.text())
    def test_tokens_are_nonempty_lowercase_alphanumeric(self, text):
        for tok in tokenize(text):
            assert tok and all(c in "0123456789abcdefghijklmnopqrstuvwxyz" for c in tok)


class TestVocabulary:
    def test_min_count_filter(self):
        vocab = build_vocab([["a"] * 5, ["b"] * 4], min_count=5)
        assert vocab.tokens == ["a"]
        assert vocab.index("b") == vocab.unknown_index == 1

    def test_min_count_one_keeps_all(self):
        vocab = build_vocab([["x", "y"], ["z", "x"]], min_count=1)
        assert vocab.tokens == ["x", "y", "z"]

    def test_default_min_count_is_five(self):
        assert build_vocab([]).min_count == 5

    def test_empty_corpus_has_only_unknown(self):
        vocab = build_vocab([], min_count=1)
        assert len(vocab) == 1 and vocab.unknown_index == 0

    def test_invalid_min_count(self):
        with pytest.raises(ValueError):
            build_vocab([["a"]], min_count=0)

    @settings(max_examples=60, deadline=None)
    @given(corpus=WORDS, min_count=st.integers(1, 4), seed=st.integers(0, 1000))
    def test_counting_oracle_order_independent_idempotent(self, corpus, min_count, seed):
        vocab = build_vocab(corpus, min_count)
        counts = Counter(t for doc in corpus for t in doc)
        assert set(vocab.tokens) == {t for t, c in counts.items() if c >= min_count}
        assert vocab.tokens == sorted(vocab.tokens, key=lambda t: (-counts[t], t))
        shuffled = [corpus[i] for i in np.random.default_rng(seed).permutation(len(corpus))]
        assert build_vocab(shuffled, min_count).tokens == vocab.tokens
        kept = [[t for t in doc if t in vocab] for doc in corpus]
        assert build_vocab(kept, min_count).tokens == vocab.tokens
        assert all(vocab.index(t) < vocab.unknown_index for t in vocab.tokens)

    def test_save_load(self, tmp_path):
        vocab = build_vocab([["b", "a", "a"]], min_count=1)
        vocab.save(tmp_path / "v.json")
        back = Vocabulary.load(tmp_path / "v.json")
        assert back.tokens == vocab.tokens and back.min_count == 1


class TestEmbeddings:
    def test_direct_read(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("cat 1.0 0.0\n")
        table = load_embeddings(path, Vocabulary(["cat"], 1))
        np.testing.assert_array_equal(table.row(0), [1.0, 0.0])
        assert table.pretrained.tolist() == [True, False]
        assert table.trainable_rows.tolist() == [False, True]

    def test_missing_rows_seeded(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("cat 1.0 0.0\n")
        vocab = Vocabulary(["cat", "dog"], 1)
        a = load_embeddings(path, vocab, seed=3)
        b = load_embeddings(path, vocab, seed=3)
        c = load_embeddings(path, vocab, seed=4)
        np.testing.assert_array_equal(a.matrix, b.matrix)
        assert not np.array_equal(a.row(1), c.row(1))
        assert np.all(np.abs(a.row(1)) <= 0.05)

    def test_column_count_error_has_line(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("cat 1.0 0.0\ndog 1 2 3\n")
        with pytest.raises(ParseError, match=r"e\.txt:2"):
            load_embeddings(path, Vocabulary(["cat"], 1))

    def test_bad_float(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("cat 1.0 zero\n")
        with pytest.raises(ParseError, match=":1"):
            load_embeddings(path, Vocabulary(["cat"], 1))

    def test_fine_tune_unfreezes(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("cat 1.0 0.0\n")
        table = load_embeddings(path, Vocabulary(["cat"], 1), fine_tune=True)
        assert table.trainable_rows.all()


class TestEmbedSequence:
    def test_one_hot_equals_lookup(self):
        """e_i^T W equals row i for every token of a 10-token vocabulary."""
        w = np.random.default_rng(0).normal(size=(11, 4))
        for i in range(11):
            one_hot = np.zeros(11)
            one_hot[i] = 1.0
            seq = embed_sequence([i], None, Tensor(w), None, 2)
            np.testing.assert_array_equal(seq.data[0], one_hot @ w)

    def test_zero_projection_empty_tokens(self):
        seq = embed_sequence([], np.ones(4), Tensor(np.ones((3, 2))), Tensor(np.zeros((4, 2))), 5)
        np.testing.assert_array_equal(seq.data, np.zeros((5, 2)))

    def test_token_at_position_one(self):
        w = np.arange(12.0).reshape(4, 3)
        seq = embed_sequence([2], np.zeros(4), Tensor(w), Tensor(np.zeros((4, 3))), 4)
        np.testing.assert_array_equal(seq.data[1], w[2])

    def test_price_token(self):
        proj = np.arange(8.0).reshape(4, 2)
        prices = np.array([0.1, 0.2, 0.3, 0.4])
        seq = embed_sequence([], prices, Tensor(np.zeros((1, 2))), Tensor(proj), 3)
        np.testing.assert_allclose(seq.data[0], prices @ proj, rtol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(n_tokens=st.integers(0, 30), max_len=st.integers(2, 12), price=st.booleans())
    def test_shape_is_always_max_len(self, n_tokens, max_len, price):
        w = Tensor(np.ones((5, 3)))
        proj = Tensor(np.ones((4, 3))) if price else None
        seq = embed_sequence([1] * n_tokens, np.ones(4), w, proj, max_len)
        assert seq.shape == (max_len, 3)
        used = min(max_len, n_tokens + price)
        assert np.all(seq.data[used:] == 0) and np.all(seq.data[:used] != 0)

    def test_embed_day_uses_normalizer(self):
        day = DayRecord(date(2020, 3, 2), 2.0, 3.0, 1.0, 2.0, 2.5, tokens=["a", "zzz"])
        vocab = Vocabulary(["a"], 1)
        table = EmbeddingTable(np.array([[1.0, 2.0], [9.0, 9.0]]), np.zeros(2, dtype=bool))
        norm = PriceNormalizer(np.array([1.0, 1.0, 1.0, 1.0]), np.array([3.0, 3.0, 3.0, 3.0]))
        seq = embed_day(day, vocab, table, np.eye(4)[:, :2], 4, norm)
        np.testing.assert_allclose(seq.data[0], [0.5, 1.0])
        np.testing.assert_array_equal(seq.data[1:3], [[1.0, 2.0], [9.0, 9.0]])


class TestRecords:
    def test_day_record_bounds(self):
        with pytest.raises(ValueError):
            DayRecord(date(2020, 3, 2), 2.0, 1.5, 1.0, 2.0, 2.0)
        with pytest.raises(ValueError):
            DayRecord(date(2020, 3, 2), 2.0, 3.0, 1.0, 2.0, 0.0)

    def test_normalizer_round_trip(self):
        recs = [DayRecord(date(2020, 3, d), p, p + 1, p - 1, p, p) for d, p in ((2, 5.0), (3, 7.0))]
        norm = PriceNormalizer.fit(recs)
        np.testing.assert_array_equal(norm.transform(recs[0].price_vector), [0, 0, 0, 0])
        np.testing.assert_array_equal(norm.transform(recs[1].price_vector), [1, 1, 1, 1])
        back = PriceNormalizer.from_dict(json.loads(json.dumps(norm.to_dict())))
        np.testing.assert_array_equal(back.low, norm.low)

    def test_read_tweets_filters_retweets(self, tmp_path):
        path = tmp_path / "t.jsonl"
        rows = [{"date": "2020-03-02", "text": "a", "retweets": 0},
                {"date": "2020-03-02", "text": "b", "retweets": 1},
                {"date": "2020-03-03", "text": "c", "retweets": 9}]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        assert [t.text for t in read_tweets(path)] == ["b", "c"]

    def test_read_tweets_error_has_line(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('{"date": "2020-03-02", "text": "a", "retweets": 2}\n{"date": "x"}\n')
        with pytest.raises(ParseError, match=r"t\.jsonl:2"):
            read_tweets(path)
