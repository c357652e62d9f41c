"""Tweet tokenization, vocabulary construction, embeddings and day sequences."""

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

logger = logging.getLogger(__name__)

DEFAULT_MIN_COUNT = 5
INIT_SCALE = 0.05

_URL = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION = re.compile(r"@\w+")
_SPLIT = re.compile(r"[^0-9a-z]+")


class ParseError(ValueError):
    """Malformed input file; the message carries the path and line."""


def tokenize(text: str) -> List[str]:
    """Lowercase, drop URLs and @-mentions, strip '#', split on non-alphanumerics.

    >>> tokenize("#Covid19 @user http://x.co")
    ['covid19']
    """
    text = text.lower()
    text = _URL.sub(" ", text)
    text = _MENTION.sub(" ", text)
    text = text.replace("#", "")
    return [tok for tok in _SPLIT.split(text) if tok]


@dataclass
class Vocabulary:
    """Token <-> index map.  Retained tokens occupy [0, n); the unknown slot is n."""

    tokens: List[str]
    min_count: int = DEFAULT_MIN_COUNT
    token_to_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.token_to_index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.token_to_index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @property
    def unknown_index(self) -> int:
        return len(self.tokens)

    def __len__(self):
        # rows in an embedding table, unknown slot included
        return len(self.tokens) + 1

    def __contains__(self, token):
        return token in self.token_to_index

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, self.unknown_index)

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.index(t) for t in tokens]

    def save(self, path):
        Path(path).write_text(
            json.dumps({"min_count": self.min_count, "tokens": self.tokens}, ensure_ascii=False),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path) -> "Vocabulary":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(list(obj["tokens"]), int(obj["min_count"]))


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = DEFAULT_MIN_COUNT) -> Vocabulary:
    """Keep tokens seen at least ``min_count`` times.

    Index order is by descending count, then lexicographic, so the result does
    not depend on document order.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter()
    for doc in corpus:
        counts.update(doc)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(kept, min_count)


@dataclass
class EmbeddingTable:
    """Embedding matrix with one row per vocabulary slot.

    ``trainable_rows`` marks rows that receive gradient updates; by default
    rows read from a pre-trained file are frozen and random rows train.
    """

    matrix: np.ndarray
    pretrained: np.ndarray
    trainable: bool = True

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    @property
    def trainable_rows(self) -> np.ndarray:
        if not self.trainable:
            return np.zeros(len(self.matrix), dtype=bool)
        return ~self.pretrained

    def row(self, i: int) -> np.ndarray:
        return self.matrix[i]

    @classmethod
    def random(cls, vocab: Vocabulary, n_features: int, seed: int, trainable: bool = True):
        rng = np.random.default_rng(seed)
        mat = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(len(vocab), n_features))
        return cls(mat, np.zeros(len(vocab), dtype=bool), trainable)


def load_embeddings(path, vocab: Vocabulary, seed: int = 0, fine_tune: bool = False) -> EmbeddingTable:
    """Read a whitespace-separated ``token f1 ... fN`` text file.

    Vocabulary tokens missing from the file get rows drawn uniformly from
    [-0.05, 0.05] with ``seed``.  ``fine_tune`` makes the pre-trained rows
    trainable too.
    """
    path = Path(path)
    found = {}
    width = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if width is None:
                width = len(values)
                if width == 0:
                    raise ParseError(f"{path}:{lineno}: no vector values")
            elif len(values) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} values, found {len(values)}")
            if token not in vocab:
                continue
            try:
                found[vocab.index(token)] = [float(v) for v in values]
            except ValueError as err:
                raise ParseError(f"{path}:{lineno}: {err}") from None
    if width is None:
        raise ParseError(f"{path}: empty embedding file")
    rng = np.random.default_rng(seed)
    mat = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(len(vocab), width))
    pre = np.zeros(len(vocab), dtype=bool)
    for i, vec in found.items():
        mat[i] = vec
        pre[i] = True
    if not np.all(np.isfinite(mat)):
        raise ParseError(f"{path}: non-finite embedding values")
    logger.info("loaded %d/%d vocabulary rows from %s", len(found), len(vocab) - 1, path)
    table = EmbeddingTable(mat, pre, trainable=True)
    if fine_tune:
        table.pretrained = np.zeros_like(pre)
    return table


@dataclass
class DayRecord:
    date: date
    open: float
    high: float
    low: float
    close: float
    adj_close: float
    volume: float = 0.0
    tokens: List[str] = field(default_factory=list)
    covid_flag: bool = False
    label: Optional[int] = None

    def __post_init__(self):
        if self.adj_close <= 0:
            raise ValueError(f"{self.date}: adjusted close must be positive")
        if self.high < max(self.open, self.close) or self.low > min(self.open, self.close):
            raise ValueError(f"{self.date}: inconsistent high/low")

    @property
    def price_vector(self) -> np.ndarray:
        return np.array([self.open, self.high, self.low, self.adj_close], dtype=np.float64)


@dataclass
class PriceNormalizer:
    """Per-feature min/max scaling of [open, high, low, adj_close]."""

    low: np.ndarray
    high: np.ndarray

    @classmethod
    def fit(cls, records: Sequence[DayRecord]) -> "PriceNormalizer":
        if not records:
            return cls(np.zeros(4), np.ones(4))
        mat = np.stack([r.price_vector for r in records])
        return cls(mat.min(axis=0), mat.max(axis=0))

    def transform(self, prices: np.ndarray) -> np.ndarray:
        span = np.where(self.high > self.low, self.high - self.low, 1.0)
        return (np.asarray(prices, dtype=np.float64) - self.low) / span

    def to_dict(self):
        return {"low": self.low.tolist(), "high": self.high.tolist()}

    @classmethod
    def from_dict(cls, obj):
        return cls(np.asarray(obj["low"], dtype=np.float64), np.asarray(obj["high"], dtype=np.float64))


def embed_sequence(token_ids: Sequence[int], prices: Optional[np.ndarray], table: Tensor,
                   price_proj: Optional[Tensor], max_len: int) -> Tensor:
    """Differentiable day sequence of shape (max_len, N_F).

    Row 0 holds ``prices @ price_proj`` when a projection is given; the
    remaining rows are embedding-table lookups, truncated and zero-padded.
    """
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    n_f = table.shape[1]
    parts = []
    if price_proj is not None:
        pv = Tensor(np.asarray(prices, dtype=np.float64).reshape(1, 4))
        parts.append(ad.matmul(pv, price_proj))
    room = max_len - len(parts)
    ids = np.asarray(list(token_ids)[:room], dtype=np.intp)
    if ids.size:
        parts.append(ad.index(table, ids))
    used = sum(p.shape[0] for p in parts)
    if not parts:
        return Tensor(np.zeros((max_len, n_f)))
    seq = ad.concat(parts, axis=0) if len(parts) > 1 else parts[0]
    if used < max_len:
        seq = ad.pad_rows(seq, 0, max_len - used)
    return seq


def embed_day(day: DayRecord, vocab: Vocabulary, table: EmbeddingTable, price_proj,
              max_len: int, normalizer: Optional[PriceNormalizer] = None) -> Tensor:
    """Embed one trading day: a price token followed by its tweet tokens."""
    prices = day.price_vector if normalizer is None else normalizer.transform(day.price_vector)
    proj = None if price_proj is None else (
        price_proj if isinstance(price_proj, Tensor) else Tensor(price_proj))
    return embed_sequence(vocab.encode(day.tokens), prices, Tensor(table.matrix), proj, max_len)


@dataclass
class Tweet:
    date: date
    text: str
    retweets: int


def read_tweets(path, min_retweets: int = 1) -> List[Tweet]:
    """Read JSON-lines tweets, dropping those with fewer than ``min_retweets``."""
    path = Path(path)
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                tw = Tweet(date.fromisoformat(obj["date"]), str(obj["text"]), int(obj.get("retweets", 0)))
            except (ValueError, KeyError, TypeError) as err:
                raise ParseError(f"{path}:{lineno}: {err}") from None
            if tw.retweets < 0:
                raise ParseError(f"{path}:{lineno}: negative retweet count")
            if tw.retweets >= min_retweets:
                out.append(tw)
    return out
