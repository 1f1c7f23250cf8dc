"""Minibatch SGDM training with best-validation checkpoint selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .models import Model
from .nn import SGDM
from .nn.functional import softmax_cross_entropy_grad, weighted_cross_entropy

log = logging.getLogger(__name__)


class NumericError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, what: str = "loss"):
        self.epoch, self.batch = epoch, batch
        where = f"epoch {epoch}, batch {batch}" if batch else f"the end of epoch {epoch}"
        super().__init__(f"non-finite {what} at {where}")


def as_features(X) -> np.ndarray:
    """Accept (1, F, 1, B), (1, F, B) or (F, B) spectra; return (1, F, B)."""
    X = np.asarray(X)
    if X.ndim == 4:
        return X[:, :, 0, :]
    if X.ndim == 2:
        return X[None]
    return X


def minibatches(n: int, batch_size: int, rng) -> list[np.ndarray]:
    """Shuffled index batches; a trailing singleton joins the previous batch."""
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and batches[-1].size < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def predict(model: Model, X, batch_size: int = 256) -> np.ndarray:
    X = as_features(X)
    out = [model.forward(X[:, :, i:i + batch_size]) for i in range(0, X.shape[2], batch_size)]
    return np.concatenate(out, axis=0)


def loss_and_accuracy(model: Model, X, y, weights=None) -> tuple[float, float]:
    p = predict(model, X)
    loss, _ = weighted_cross_entropy(p, y, weights)
    return loss, float(np.mean(p.argmax(axis=1) == y))


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = -1.0
    best_state: list = field(default_factory=list)


def fit(model: Model, X_train, y_train, X_val=None, y_val=None, *, epochs: int = 40,
        lr: float = 0.01, momentum: float = 0.9, batch_size: int = 64, weights=None,
        seed: int = 0) -> TrainResult:
    """Train ``model`` in place; returns the per-epoch log and best-validation weights.

    Validation accuracy is computed after every epoch and the best epoch's
    weights (ties keep the earlier epoch) are kept in ``best_state``. There is
    no early stopping.
    """
    X_train = as_features(X_train).astype(model.dtype, copy=False)
    y_train = np.asarray(y_train, dtype=np.int64)
    has_val = X_val is not None and len(y_val) > 0
    if has_val:
        X_val = as_features(X_val).astype(model.dtype, copy=False)
        y_val = np.asarray(y_val, dtype=np.int64)
    w = None if weights is None else np.asarray(weights, dtype=model.dtype)
    opt = SGDM(model.params(), lr=lr, momentum=momentum)
    rng = np.random.default_rng([seed, 2])
    result = TrainResult()

    for epoch in range(1, epochs + 1):
        tot_loss = tot_correct = 0.0
        for b, idx in enumerate(minibatches(y_train.size, batch_size, rng), start=1):
            # Finiteness is checked explicitly below, so numpy's warnings are noise.
            with np.errstate(over="ignore", invalid="ignore"):
                try:
                    p = model.forward(X_train[:, :, idx], train=True)
                except FloatingPointError:
                    raise NumericError(epoch, b, "logits") from None
                loss, _ = weighted_cross_entropy(p, y_train[idx], w)
                if not np.isfinite(loss):
                    raise NumericError(epoch, b)
                model.backward(softmax_cross_entropy_grad(p, y_train[idx], w))
                try:
                    opt.step()
                except FloatingPointError:
                    raise NumericError(epoch, b, "gradient") from None
            tot_loss += loss * idx.size
            tot_correct += float(np.sum(p.argmax(axis=1) == y_train[idx]))
        row = {"epoch": epoch, "train_loss": tot_loss / y_train.size, "train_acc": tot_correct / y_train.size}
        if has_val:
            try:
                row["val_loss"], row["val_acc"] = loss_and_accuracy(model, X_val, y_val, w)
            except FloatingPointError:
                raise NumericError(epoch, 0, "validation logits") from None
        else:
            row["val_loss"], row["val_acc"] = row["train_loss"], row["train_acc"]
        result.history.append(row)
        log.info("epoch %d: train loss %.4f acc %.4f | val loss %.4f acc %.4f", epoch,
                 row["train_loss"], row["train_acc"], row["val_loss"], row["val_acc"])
        if row["val_acc"] > result.best_val_acc:
            result.best_val_acc = row["val_acc"]
            result.best_epoch = epoch
            result.best_state = [(k, v.copy()) for k, v in model.state()]
    return result
