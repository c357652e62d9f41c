"""Trading-day alignment, horizon labeling, date splits and summary statistics."""

import bisect
import csv
import hashlib
import json
import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .text import DayRecord, ParseError, PriceNormalizer, Tweet, tokenize

logger = logging.getLogger(__name__)

PRICE_HEADER = ["Date", "Open", "High", "Low", "Close", "AdjClose", "Volume"]
COVID_TERMS = frozenset({"covid", "covid19", "coronavirus", "covid_19", "sarscov2"})

DEFAULT_TRAIN_END = date(2020, 1, 31)
DEFAULT_VAL_END = date(2020, 2, 29)
DEFAULT_TEST_END = date(2020, 7, 30)


class IngestionError(ValueError):
    """Input data violates an alignment precondition."""


def read_prices(path) -> List[DayRecord]:
    """Parse a ``Date,Open,High,Low,Close,AdjClose,Volume`` CSV, sorted by date."""
    path = Path(path)
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PRICE_HEADER:
            raise ParseError(f"{path}:1: expected header {','.join(PRICE_HEADER)}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(PRICE_HEADER):
                raise ParseError(f"{path}:{lineno}: expected 7 fields, found {len(row)}")
            try:
                d = date.fromisoformat(row[0].strip())
                o, h, lo, c, adj, vol = (float(v) for v in row[1:])
                records.append(DayRecord(d, o, h, lo, c, adj, vol))
            except ValueError as err:
                raise ParseError(f"{path}:{lineno}: {err}") from None
    records.sort(key=lambda r: r.date)
    return records


def write_prices(path, records: Iterable[DayRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PRICE_HEADER)
        for r in records:
            w.writerow([r.date.isoformat(), repr(r.open), repr(r.high), repr(r.low),
                        repr(r.close), repr(r.adj_close), repr(r.volume)])


@dataclass
class TradingCalendar:
    dates: List[date]

    def __post_init__(self):
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise IngestionError(f"calendar not strictly increasing at {a} -> {b}")
        weekend = [d for d in self.dates if d.weekday() >= 5]
        if weekend:
            raise IngestionError(f"weekend dates in calendar: {weekend[:5]}")

    def next_trading_day(self, d: date) -> Optional[date]:
        """First trading date on or after ``d``."""
        i = bisect.bisect_left(self.dates, d)
        return self.dates[i] if i < len(self.dates) else None

    def __len__(self):
        return len(self.dates)


def align(prices: Sequence[DayRecord], tweets: Sequence[Tweet]) -> List[DayRecord]:
    """Attach each tweet's tokens to the trading day on or after its date.

    Tweets dated after the last trading day have no day to attach to and are
    dropped.  Every price record is kept, with an empty token list when no
    tweets map to it.
    """
    counts = defaultdict(int)
    for r in prices:
        counts[r.date] += 1
    dupes = sorted(d for d, n in counts.items() if n > 1)
    if dupes:
        raise IngestionError("duplicate price dates: " + ", ".join(d.isoformat() for d in dupes))
    ordered = sorted(prices, key=lambda r: r.date)
    calendar = TradingCalendar([r.date for r in ordered])
    bucket: Dict[date, List[str]] = defaultdict(list)
    dropped = 0
    for tw in sorted(tweets, key=lambda t: t.date):
        day = calendar.next_trading_day(tw.date)
        if day is None:
            dropped += 1
            continue
        bucket[day].extend(tokenize(tw.text))
    if dropped:
        logger.warning("%d tweets fall after the last trading day and were dropped", dropped)
    out = []
    for r in ordered:
        toks = bucket.get(r.date, [])
        covid = any(t in COVID_TERMS for t in toks)
        out.append(replace(r, tokens=list(toks), covid_flag=covid or r.covid_flag))
    return out


def up_count(closes: Sequence[float], start: int, horizon: int) -> int:
    return sum(1 for k in range(1, horizon + 1) if closes[start + k] > closes[start + k - 1])


@dataclass
class LabeledDataset:
    records: List[DayRecord]
    horizon: int = 5
    threshold: int = 3
    unlabeled_tail: List[DayRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def labels(self) -> List[int]:
        return [r.label for r in self.records]


def label(records: Sequence[DayRecord], horizon: int = 5, threshold: int = 3) -> LabeledDataset:
    """Label day d as 1 when at least ``threshold`` of the next ``horizon``
    daily adjusted-close moves are rises (equal closes count as not up)."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    records = list(records)
    if any(a.date >= b.date for a, b in zip(records, records[1:])):
        raise IngestionError("records must be sorted by strictly increasing date")
    if len(records) < horizon + 1:
        warnings.warn(f"{len(records)} records cannot fill a {horizon}-day horizon; no labels")
        return LabeledDataset([], horizon, threshold, list(records))
    closes = [r.adj_close for r in records]
    n = len(records) - horizon
    labeled = [
        replace(r, label=int(up_count(closes, i, horizon) >= threshold))
        for i, r in enumerate(records[:n])
    ]
    tail = [replace(r, label=None) for r in records[n:]]
    return LabeledDataset(labeled, horizon, threshold, tail)


@dataclass
class Splits:
    train: LabeledDataset
    val: LabeledDataset
    test: LabeledDataset


def split(dataset: LabeledDataset, train_end: date = DEFAULT_TRAIN_END, val_end: date = DEFAULT_VAL_END,
          test_end: date = DEFAULT_TEST_END) -> Splits:
    """Partition by date: train <= train_end < val <= val_end < test <= test_end."""
    if not train_end < val_end < test_end:
        raise ValueError("split boundaries must satisfy train_end < val_end < test_end")
    parts = {"train": [], "val": [], "test": []}
    for r in dataset.records:
        if r.date <= train_end:
            parts["train"].append(r)
        elif r.date <= val_end:
            parts["val"].append(r)
        elif r.date <= test_end:
            parts["test"].append(r)
    for name, recs in parts.items():
        if not recs:
            warnings.warn(f"{name} split is empty")
    mk = lambda recs: LabeledDataset(recs, dataset.horizon, dataset.threshold)
    return Splits(mk(parts["train"]), mk(parts["val"]), mk(parts["test"]))


FIELDS = ("open", "high", "low", "adj_close", "covid_flag", "label")


def field_matrix(records: Sequence[DayRecord], fields: Sequence[str],
                 normalizer: Optional[PriceNormalizer] = None) -> np.ndarray:
    """Numeric columns; prices min/max-normalized, booleans and labels as 0/1."""
    norm = normalizer or PriceNormalizer.fit(records)
    price_cols = {"open": 0, "high": 1, "low": 2, "adj_close": 3}
    prices = np.array([norm.transform(r.price_vector) for r in records]).reshape(len(records), 4)
    cols = []
    for f in fields:
        if f in price_cols:
            cols.append(prices[:, price_cols[f]])
        elif f == "close":
            cols.append(np.array([r.close for r in records], dtype=np.float64))
        elif f == "volume":
            cols.append(np.array([r.volume for r in records], dtype=np.float64))
        elif f == "covid_flag":
            cols.append(np.array([float(r.covid_flag) for r in records]))
        elif f == "label":
            cols.append(np.array([np.nan if r.label is None else float(r.label) for r in records]))
        elif f == "token_count":
            cols.append(np.array([float(len(r.tokens)) for r in records]))
        else:
            raise ValueError(f"unknown field {f!r}")
    return np.column_stack(cols) if cols else np.zeros((len(records), 0))


def correlation_matrix(records: Sequence[DayRecord], fields: Sequence[str] = FIELDS) -> np.ndarray:
    """Pearson correlations; zero-variance fields give NaN rows/columns."""
    if len(records) < 2:
        raise ValueError("correlation needs at least 2 records")
    x = field_matrix(records, fields)
    x = x - x.mean(axis=0)
    sd = np.sqrt((x * x).sum(axis=0))
    flat = sd == 0
    if flat.any():
        warnings.warn("zero-variance fields: " + ", ".join(f for f, z in zip(fields, flat) if z))
    safe = np.where(flat, 1.0, sd)
    z = x / safe
    corr = z.T @ z
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    corr[flat, :] = np.nan
    corr[:, flat] = np.nan
    return corr


def write_labeled(path, records: Iterable[DayRecord]) -> None:
    """Plot-ready export: Date,AdjClose,CovidFlag,Label,TokenCount."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["Date", "AdjClose", "CovidFlag", "Label", "TokenCount"])
        for r in records:
            w.writerow([r.date.isoformat(), repr(r.adj_close), int(r.covid_flag),
                        "" if r.label is None else r.label, len(r.tokens)])


ARCHIVE_FORMAT = "hpsmp-dataset/1"


def record_to_dict(r: DayRecord) -> dict:
    return {"date": r.date.isoformat(), "open": r.open, "high": r.high, "low": r.low,
            "close": r.close, "adj_close": r.adj_close, "volume": r.volume,
            "tokens": list(r.tokens), "covid_flag": bool(r.covid_flag), "label": r.label}


def record_from_dict(obj: dict) -> DayRecord:
    return DayRecord(date.fromisoformat(obj["date"]), obj["open"], obj["high"], obj["low"],
                     obj["close"], obj["adj_close"], obj.get("volume", 0.0),
                     list(obj.get("tokens", [])), bool(obj.get("covid_flag", False)),
                     obj.get("label"))


def archive_bytes(tickers: Dict[str, LabeledDataset], meta: Optional[dict] = None) -> bytes:
    """Canonical JSON encoding of labeled per-ticker datasets, stable across runs."""
    body = {
        "format": ARCHIVE_FORMAT,
        "meta": meta or {},
        "tickers": {
            name: {"horizon": ds.horizon, "threshold": ds.threshold,
                   "records": [record_to_dict(r) for r in ds.records],
                   "unlabeled_tail": [record_to_dict(r) for r in ds.unlabeled_tail]}
            for name, ds in sorted(tickers.items())
        },
    }
    return json.dumps(body, sort_keys=True, indent=1).encode("utf-8")


def archive_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def load_archive(path) -> Dict[str, LabeledDataset]:
    path = Path(path)
    try:
        body = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}:{err.lineno}: {err.msg}") from None
    if body.get("format") != ARCHIVE_FORMAT:
        raise ParseError(f"{path}: not a labeled dataset archive")
    out = {}
    for name, obj in body["tickers"].items():
        out[name] = LabeledDataset([record_from_dict(r) for r in obj["records"]], obj["horizon"],
                                   obj["threshold"],
                                   [record_from_dict(r) for r in obj["unlabeled_tail"]])
    return out
