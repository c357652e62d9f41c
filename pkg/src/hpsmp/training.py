"""Training loop, confusion-matrix evaluation and prediction."""

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Graph, NumericalError, Tensor
from .model import Example, HpsmpModel
from .optim import AdamState, adam_update
from .text import DayRecord, PriceNormalizer, Vocabulary

logger = logging.getLogger(__name__)

THRESHOLD = 0.5


@dataclass
class TrainConfig:
    model: str = "hybrid"
    lr: float = 0.001
    batch: int = 64
    epochs: int = 15
    dropout: float = 0.5
    seed: int = 0
    head: str = "sigmoid"
    horizon: int = 5

    def __post_init__(self):
        if self.lr < 0:
            raise ContractError("lr must be >= 0")
        if self.batch < 1:
            raise ContractError("batch must be >= 1")
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")


def seed_streams(seed: int, names=("init", "dropout", "shuffle", "montecarlo")) -> Dict[str, int]:
    """Derive one integer seed per named sub-stream from a master seed."""
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: int(c.generate_state(1)[0]) for n, c in zip(names, children)}


def examples_from_records(records: Sequence[DayRecord], vocab: Vocabulary,
                          normalizer: PriceNormalizer) -> List[Example]:
    return [
        Example(vocab.encode(r.tokens), normalizer.transform(r.price_vector), r.label,
                r.date.isoformat())
        for r in records
    ]


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float = float("nan")
    val_acc: float = float("nan")


def _inputs(model: HpsmpModel, items: Sequence) -> List[Tensor]:
    return [model.embed(x) if isinstance(x, Example) else x for x in items]


def loss_and_accuracy(model: HpsmpModel, items: Sequence, labels: Sequence[int],
                      batch: int = 256) -> Tuple[float, float]:
    """Inference-mode mean BCE and accuracy."""
    if not len(items):
        return float("nan"), float("nan")
    total, correct = 0.0, 0
    with ad.no_grad():
        for s in range(0, len(items), batch):
            chunk = items[s:s + batch]
            y = np.asarray(labels[s:s + batch], dtype=np.float64)
            p = model.forward(_inputs(model, chunk), "infer")
            total += ad.bce_loss(p, y).item() * len(chunk)
            correct += int(((p.data >= THRESHOLD).astype(int) == y).sum())
    return total / len(items), correct / len(items)


def train(model: HpsmpModel, items: Sequence, labels: Optional[Sequence[int]] = None,
          config: Optional[TrainConfig] = None, val_items: Sequence = (),
          val_labels: Optional[Sequence[int]] = None,
          on_epoch: Optional[Callable[[EpochStats], bool]] = None) -> Tuple[HpsmpModel, List[EpochStats]]:
    """Adam over mean BCE with epoch shuffling; returns the trained model and curves.

    ``items`` are :class:`Example` objects or pre-embedded day tensors.  Labels
    default to each example's own label.  The model is updated in place.
    ``on_epoch`` sees each epoch's stats and may return True to stop early.
    On a non-finite loss the parameters of the last finite step are restored
    and :class:`NumericalError` is raised.
    """
    if not len(items):
        raise ContractError("training split is empty")
    config = config or TrainConfig()
    labels = [x.label for x in items] if labels is None else list(labels)
    if val_labels is None:
        val_labels = [x.label for x in val_items]
    if any(l not in (0, 1) for l in labels):
        raise ContractError("training labels must be 0 or 1")
    streams = seed_streams(config.seed)
    shuffle_rng = np.random.default_rng(streams["shuffle"])
    drop_rng = np.random.default_rng(streams["dropout"])
    model.config = replace(model.config, dropout=config.dropout)
    state = AdamState()
    masks = {}
    if model.frozen_rows is not None and "embedding" in model.params:
        masks["embedding"] = (~model.frozen_rows).astype(np.float64)[:, None]
    curves = []
    n = len(items)
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        for s in range(0, n, config.batch):
            idx = order[s:s + config.batch]
            batch = [items[i] for i in idx]
            y = np.array([labels[i] for i in idx], dtype=np.float64)
            good = {k: v.data.copy() for k, v in model.params.items()}
            good_bn = None
            if model.bn_state is not None:
                good_bn = (model.bn_state.running_mean.copy(), model.bn_state.running_var.copy())
            for p in model.params.values():
                p.grad = None
            with Graph() as g:
                pred = model.forward(_inputs(model, batch), "train", drop_rng)
                loss = ad.bce_loss(pred, y)
            if not math.isfinite(loss.item()):
                for k, v in good.items():
                    model.params[k].data[...] = v
                if good_bn is not None:
                    model.bn_state.running_mean, model.bn_state.running_var = good_bn
                raise NumericalError(f"non-finite loss at epoch {epoch}")
            ad.backward(g, loss)
            grads = {}
            for k, p in model.params.items():
                if p.grad is None:
                    continue
                grads[k] = p.grad * masks[k] if k in masks else p.grad
            adam_update(model.params, grads, state, lr=config.lr)
        tl, ta = loss_and_accuracy(model, items, labels)
        vl, va = loss_and_accuracy(model, list(val_items), list(val_labels or []))
        curves.append(EpochStats(epoch, tl, ta, vl, va))
        logger.info("epoch %d loss %.4f acc %.3f val_loss %.4f val_acc %.3f", epoch, tl, ta, vl, va)
        if on_epoch is not None and on_epoch(curves[-1]):
            break
    for p in model.params.values():
        p.grad = None
    return model, curves


def write_curves(path, curves: Sequence[EpochStats]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for c in curves:
            w.writerow([c.epoch, repr(c.train_loss), repr(c.train_acc), repr(c.val_loss), repr(c.val_acc)])


@dataclass
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    predictions: List[float] = field(default_factory=list)
    dates: List[Optional[str]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> Optional[float]:
        return (self.tp + self.tn) / self.total if self.total else None

    @property
    def sensitivity(self) -> Optional[float]:
        d = self.tp + self.fn
        return self.tp / d if d else None

    @property
    def specificity(self) -> Optional[float]:
        d = self.tn + self.fp
        return self.tn / d if d else None

    @classmethod
    def from_predictions(cls, scores: Sequence[float], labels: Sequence[int],
                         dates: Sequence[Optional[str]] = ()) -> "EvalReport":
        tp = fp = tn = fn = 0
        for s, y in zip(scores, labels):
            pred = 1 if s >= THRESHOLD else 0
            if pred and y:
                tp += 1
            elif pred:
                fp += 1
            elif y:
                fn += 1
            else:
                tn += 1
        return cls(tp, fp, tn, fn, [float(s) for s in scores], list(dates))

    def summary(self) -> dict:
        return {
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "accuracy": self.accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "n": self.total,
        }


def evaluate(model: HpsmpModel, items: Sequence, labels: Optional[Sequence[int]] = None) -> EvalReport:
    """Threshold scores at 0.5 (ties to class 1) and count the confusion matrix."""
    if not len(items):
        raise ContractError("cannot evaluate an empty split")
    labels = [x.label for x in items] if labels is None else list(labels)
    scores = [predict(model, x) for x in items]
    dates = [getattr(x, "date", None) for x in items]
    return EvalReport.from_predictions(scores, labels, dates)


def predict(model: HpsmpModel, item) -> float:
    """Deterministic inference-mode movement score in [0, 1]."""
    if isinstance(item, Example):
        return model.predict(item)
    return model.predict_sequence(item)
