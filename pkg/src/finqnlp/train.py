"""Losses, optimiser, dataset splitting and the epoch loop."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import EmptySplit, InvalidLabel, NonFiniteGradient, TooSmall

logger = logging.getLogger(__name__)

P_CLAMP = 1e-7
CURVE_FIELDS = ("epoch", "train_loss", "val_loss", "train_acc", "val_acc", "wallclock_s")


# -- losses ------------------------------------------------------------------

def binary_cross_entropy(p, label):
    if label not in (0, 1):
        raise InvalidLabel(f"binary label expected, got {label!r}")
    p = min(max(float(p), P_CLAMP), 1 - P_CLAMP)
    return -math.log(p) if label == 1 else -math.log1p(-p)


def log_softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max()
    return z - math.log(np.exp(z).sum())


def categorical_cross_entropy(logits, label):
    logits = np.asarray(logits, dtype=float)
    if not (isinstance(label, (int, np.integer)) and 0 <= label < logits.size):
        raise InvalidLabel(f"label {label!r} outside 0..{logits.size - 1}")
    return float(-log_softmax(logits)[label])


def categorical_cross_entropy_grad(logits, label):
    probs = np.exp(log_softmax(logits))
    probs[label] -= 1.0
    return probs


def cross_entropy(probs_or_logits, label):
    """BCE for a scalar probability, categorical CE for a logit vector."""
    if np.ndim(probs_or_logits) == 0:
        return binary_cross_entropy(probs_or_logits, label)
    return categorical_cross_entropy(probs_or_logits, label)


# -- optimiser ---------------------------------------------------------------

@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict, lr: float):
    """In-place Adam update of ``params`` (name -> float or array) from ``grads``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient for {name!r} is not finite")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    for name, g in grads.items():
        m = b1 * state.m.get(name, 0.0) + (1 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1 - b2) * np.square(g)
        state.m[name], state.v[name] = m, v
        params[name] = params[name] - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# -- splitting ---------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float | None = None  # None: the model's default
    seed: int = 0
    split: tuple = (0.8, 0.1, 0.1)
    early_stop_patience: int | None = None

    def __post_init__(self):
        self.split = tuple(float(x) for x in self.split)
        if len(self.split) != 3 or any(x <= 0 for x in self.split) or abs(sum(self.split) - 1) > 1e-9:
            raise ValueError(f"split must be three positive fractions summing to 1, got {self.split}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self):
        return {**asdict(self), "split": list(self.split)}


def split_indices(n, fractions=(0.8, 0.1, 0.1), seed=0):
    if n < 10:
        raise TooSmall(f"need at least 10 records to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def split_dataset(dataset, config: TrainConfig):
    """Seeded shuffle, then contiguous train/val/test slices."""
    tr, va, te = split_indices(len(dataset), config.split, config.seed)
    return dataset.subset(tr), dataset.subset(va), dataset.subset(te)


# -- evaluation ----------------------------------------------------------------

@dataclass
class EvalResult:
    loss: float
    accuracy: float
    confusion: np.ndarray  # rows: true class; columns: predicted class, last = abstained

    def to_dict(self):
        return {"loss": self.loss, "accuracy": self.accuracy, "confusion": self.confusion.tolist()}


def evaluate(model, X, y) -> EvalResult:
    """Mean cross-entropy, accuracy and confusion counts; dropout is off.

    Models may predict ``-1`` to abstain (e.g. a sentence that cannot be
    parsed); abstentions count as errors and fill the last confusion column.
    """
    y = np.asarray(y, dtype=int)
    if len(y) == 0:
        raise EmptySplit("cannot evaluate an empty split")
    proba = model.predict_proba(X)
    pred = model.predict(X)
    p_true = np.clip(proba[np.arange(len(y)), y], P_CLAMP, 1 - P_CLAMP)
    n_classes = proba.shape[1]
    confusion = np.zeros((n_classes, n_classes + 1), dtype=int)
    for t, p in zip(y, pred):
        confusion[t, p if p >= 0 else n_classes] += 1
    return EvalResult(float(-np.log(p_true).mean()), float(np.mean(pred == y)), confusion)


# -- epoch loop ------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    wallclock_s: float

    def row(self):
        return [self.epoch, repr(self.train_loss), repr(self.val_loss), repr(self.train_acc),
                repr(self.val_acc), f"{self.wallclock_s:.3f}"]


class CurveWriter:
    """Appends one CSV row per epoch and flushes, so partial runs leave a usable curve."""

    def __init__(self, path):
        self.path = Path(path)
        with self.path.open("w", newline="") as fh:
            csv.writer(fh).writerow(CURVE_FIELDS)

    def __call__(self, record: EpochRecord):
        with self.path.open("a", newline="") as fh:
            csv.writer(fh).writerow(record.row())


def read_curve(path):
    with Path(path).open(newline="") as fh:
        return [
            EpochRecord(int(r["epoch"]), *(float(r[k]) for k in CURVE_FIELDS[1:]))
            for r in csv.DictReader(fh)
        ]


def run_epochs(model, X, y, X_val=None, y_val=None, epochs=20, batch_size=16, seed=0,
               callback=None, early_stop_patience=None):
    """Minibatch training loop shared by every estimator.

    ``model`` must provide ``_train_batch(X_batch, y_batch)`` (one optimiser
    step on the batch-mean gradient) plus ``predict``/``predict_proba``.
    After each epoch the full training and validation splits are evaluated.
    """
    y = np.asarray(y, dtype=int)
    rng = np.random.default_rng(seed)
    history = []
    best, stale = math.inf, 0
    start = time.perf_counter()
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(y))
        for lo in range(0, len(order), batch_size):
            idx = order[lo:lo + batch_size]
            model._train_batch([X[i] for i in idx], y[idx])
        tr = evaluate(model, X, y)
        va = evaluate(model, X_val, y_val) if X_val is not None and len(X_val) else None
        rec = EpochRecord(epoch, tr.loss, va.loss if va else math.nan, tr.accuracy,
                          va.accuracy if va else math.nan, time.perf_counter() - start)
        history.append(rec)
        logger.info("epoch %d: train loss %.4f acc %.3f | val loss %.4f acc %.3f",
                    epoch, rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc)
        if callback is not None:
            callback(rec)
        if early_stop_patience is not None and va is not None:
            if va.loss < best:
                best, stale = va.loss, 0
            else:
                stale += 1
                if stale >= early_stop_patience:
                    break
    return history


# -- end-to-end --------------------------------------------------------------

@dataclass
class TrainResult:
    history: list
    test: EvalResult | None
    model: object
    counts: dict


def make_model(model_kind, config: TrainConfig, **overrides):
    from .estimators import DisCoCatClassifier, LSTMClassifier, QLSTMClassifier

    cls = {"lstm": LSTMClassifier, "qlstm": QLSTMClassifier, "discocat": DisCoCatClassifier}[model_kind]
    kwargs = {"epochs": config.epochs, "batch_size": config.batch_size, "random_state": config.seed}
    if config.learning_rate is not None:
        kwargs["learning_rate"] = config.learning_rate
    kwargs.update(overrides)
    return cls(**kwargs)


def train_model(model_kind, dataset, config: TrainConfig, out_dir=None, **model_params) -> TrainResult:
    """Split, fit with per-epoch metrics, and score on the test split.

    For ``discocat`` the dataset is binarized and sentences outside the
    grammar fragment are dropped first; the counts are returned in
    ``result.counts``.  With ``out_dir`` the curve CSV is written as training
    progresses and the fitted model is saved to ``model.ckpt``.
    """
    from .data import binarize
    from .estimators import DisCoCatClassifier, save_checkpoint

    counts = {"input": len(dataset)}
    if model_kind == "discocat":
        binary = binarize(dataset)
        counts["dropped_neutral"] = binary.report["dropped_neutral"]
        keep, skipped = DisCoCatClassifier.parseable(binary, **{k: v for k, v in model_params.items()
                                                                if k in ("lexicon", "fallback")})
        counts["unparseable"] = len(skipped)
        dataset = binary.subset(keep)
    counts["used"] = len(dataset)
    train, val, test = split_dataset(dataset, config)
    counts.update(train=len(train), val=len(val), test=len(test))

    model = make_model(model_kind, config, **model_params)
    callback = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        callback = CurveWriter(out_dir / "curve.csv")
    model.fit(train.texts, train.labels, X_val=val.texts, y_val=val.labels, callback=callback,
              early_stop_patience=config.early_stop_patience)
    test_result = evaluate(model, test.texts, test.labels) if len(test) else None
    if out_dir is not None:
        save_checkpoint(model, out_dir / "model.ckpt")
        payload = {"counts": counts, "test": test_result.to_dict() if test_result else None,
                   "history": [asdict(r) for r in model.history_]}
        (out_dir / "metrics.json").write_text(json.dumps(payload, indent=2))
    return TrainResult(model.history_, test_result, model, counts)
