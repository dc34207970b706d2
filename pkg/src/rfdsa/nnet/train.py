"""Optimizers and the early-stopping training loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from rfdsa.nnet.model import NeuralModel, accuracy, cross_entropy, loss_and_gradient, one_hot, predict_scores

log = logging.getLogger(__name__)


class EmptyDataset(ValueError):
    pass


class SingleClass(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 8
    split: float = 0.8
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ValueError("split must lie in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              config: TrainConfig) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grads
    v = config.beta2 * state.v + (1.0 - config.beta2) * grads * grads
    m_hat = m / (1.0 - config.beta1 ** t)
    v_hat = v / (1.0 - config.beta2 ** t)
    new = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return new, AdamState(m, v, t)


def sgd_step(params: np.ndarray, grads: np.ndarray, config: TrainConfig) -> np.ndarray:
    return params - config.learning_rate * grads


@dataclass
class History:
    rows: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def append(self, row: dict) -> None:
        self.rows.append(row)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def to_csv(self, path) -> None:
        keys = list(self.rows[0]) if self.rows else ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(self.rows)


def split_indices(n: int, split: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    cut = int(round(split * n))
    cut = min(max(cut, 1), n - 1)
    return perm[:cut], perm[cut:]


# A penalty maps a flat parameter vector to (value, gradient).
Penalty = Callable[[np.ndarray], tuple[float, np.ndarray]]


def _evaluate(model: NeuralModel, x, y, penalty: Optional[Penalty], active=None) -> tuple[float, float]:
    scores = predict_scores(model, x, active=active)
    loss = cross_entropy(scores, one_hot(y, model.n_classes))
    if penalty is not None:
        loss += penalty(model.flat())[0]
    return loss, float(np.mean(np.argmax(scores, axis=1) == y))


def train(model: NeuralModel, x, y, config: TrainConfig = TrainConfig(),
          penalty: Optional[Penalty] = None,
          on_epoch: Optional[Callable[[int, NeuralModel], dict]] = None,
          validation: Optional[tuple] = None,
          active: Optional[Sequence[int]] = None) -> tuple[NeuralModel, History]:
    """Mini-batch training with early stopping on validation loss.

    The data are split ``config.split`` / rest into train and validation
    unless ``validation`` is given explicitly. When validation loss has not
    improved for ``config.patience`` consecutive epochs the loop stops and the
    best snapshot is returned. ``penalty`` adds a regularizer (e.g. EWC) to the
    objective; ``active`` limits the softmax to one task's outputs;
    ``on_epoch`` may return extra columns for the history.
    """
    x = np.asarray(x)
    y = np.asarray(y, dtype=int)
    if len(x) == 0:
        raise EmptyDataset("no training samples")
    if len(np.unique(y)) < 2:
        raise SingleClass("training needs at least two classes")
    rng = np.random.default_rng(config.seed)
    if validation is None:
        tr, va = split_indices(len(x), config.split, rng)
        xt, yt, xv, yv = x[tr], y[tr], x[va], y[va]
    else:
        xt, yt = x, y
        xv, yv = np.asarray(validation[0]), np.asarray(validation[1], dtype=int)

    work = model.copy()
    theta = work.flat()
    state = AdamState.zeros(theta.size)
    history = History()
    best_loss, best_theta, stale = np.inf, theta.copy(), 0
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(xt))
        losses, correct = [], 0
        for i in range(0, len(perm), config.batch_size):
            idx = perm[i:i + config.batch_size]
            loss, grad = loss_and_gradient(work, xt[idx], yt[idx], True, rng, active)
            if penalty is not None:
                pv, pg = penalty(theta)
                loss, grad = loss + pv, grad + pg
            if config.optimizer == "adam":
                theta, state = adam_step(theta, grad, state, config)
            else:
                theta = sgd_step(theta, grad, config)
            _assign(work, theta)
            losses.append(loss * len(idx))
        train_loss, train_acc = _evaluate(work, xt, yt, penalty, active)
        val_loss, val_acc = _evaluate(work, xv, yv, penalty, active)
        row = {"epoch": epoch, "train_loss": train_loss, "train_acc": train_acc,
               "val_loss": val_loss, "val_acc": val_acc}
        if on_epoch is not None:
            row.update(on_epoch(epoch, work))
        history.append(row)
        log.debug("epoch %d train %.4f/%.3f val %.4f/%.3f", epoch, train_loss, train_acc, val_loss, val_acc)
        if val_loss < best_loss:
            best_loss, best_theta, stale = val_loss, theta.copy(), 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                history.stopped_early = True
                break
    return model.with_flat(best_theta), history


def _assign(model: NeuralModel, theta: np.ndarray) -> None:
    k = 0
    for p in model.params:
        p[...] = theta[k:k + p.size].reshape(p.shape)
        k += p.size


def task_accuracy(model: NeuralModel, x, y, classes=None) -> float:
    return accuracy(model, x, y, classes)
