"""Elastic weight consolidation: diagonal Fisher importance and the anchored penalty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rfdsa.nnet.layers import ShapeMismatch
from rfdsa.nnet.model import NeuralModel, as_input, cross_entropy, loss_and_gradient, one_hot, predict_scores

DEFAULT_LAMBDA = 100.0


class EmptySamples(ValueError):
    pass


@dataclass(frozen=True)
class FisherDiag:
    values: np.ndarray
    anchor: np.ndarray
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if self.values.shape != self.anchor.shape:
            raise ShapeMismatch("Fisher diagonal and anchor must align")
        if np.any(self.values < 0):
            raise ValueError("Fisher diagonal must be non-negative")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")

    def penalty(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        """``sum_i lam/2 F_i (theta_i - anchor_i)^2`` and its gradient."""
        if theta.shape != self.anchor.shape:
            raise ShapeMismatch(f"parameter vector of size {theta.size} vs Fisher of size {self.anchor.size}")
        d = theta - self.anchor
        fd = self.values * d
        return float(0.5 * self.lam * np.dot(fd, d)), self.lam * fd


def fisher_diagonal(model: NeuralModel, samples, labels, lam: float = DEFAULT_LAMBDA,
                    max_samples: int | None = None) -> FisherDiag:
    """Empirical Fisher: mean squared gradient of the true-label log-likelihood."""
    x = as_input(samples, model)
    labels = np.asarray(labels, dtype=int)
    if len(x) == 0:
        raise EmptySamples("Fisher estimate needs at least one sample")
    if max_samples is not None and max_samples < len(x):
        # evenly spaced, so class-ordered data still covers every class
        idx = np.linspace(0, len(x) - 1, max_samples).round().astype(int)
        x, labels = x[idx], labels[idx]
    acc = np.zeros(model.n_params)
    for xi, yi in zip(x, labels):
        # per-sample CE gradient is -d log y_label / d theta
        g = loss_and_gradient(model, xi[None], [yi])[1]
        acc += g * g
    return FisherDiag(acc / len(x), model.flat(), lam)


def ewc_loss(model: NeuralModel, batch, labels, fisher: FisherDiag) -> float:
    scores = predict_scores(model, batch)
    return cross_entropy(scores, one_hot(labels, model.n_classes)) + fisher.penalty(model.flat())[0]


def ewc_loss_and_gradient(model: NeuralModel, batch, labels, fisher: FisherDiag) -> tuple[float, np.ndarray]:
    loss, grad = loss_and_gradient(model, batch, labels)
    pv, pg = fisher.penalty(model.flat())
    return loss + pv, grad + pg
