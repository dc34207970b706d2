"""Sequential classifier: parameters, forward pass, loss and backpropagation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from rfdsa.nnet.layers import (
    Conv1d, Dense, Dropout, Flatten, Layer, MaxPool1d, SELUConfig, ShapeMismatch, ZeroPad1d,
)
from rfdsa.sigsynth import FRAME_LEN, SignalClass

INPUT_SHAPE = (FRAME_LEN, 2)
LOG_CLAMP = 1e-12
CLASS_LABELS = [c.label for c in SignalClass]


@dataclass
class NeuralModel:
    layers: list[Layer]
    params: list[np.ndarray]
    labels: list[str]
    selu: SELUConfig = field(default_factory=SELUConfig)
    input_shape: tuple = INPUT_SHAPE

    def __post_init__(self):
        shape = tuple(self.input_shape)
        expected = []
        for layer in self.layers:
            shape_in = shape
            shape = layer.out_shape(shape)
            expected.extend(layer.param_shapes(shape_in))
        if shape != (len(self.labels),):
            raise ShapeMismatch(f"model output {shape} does not match {len(self.labels)} labels")
        if [p.shape for p in self.params] != expected:
            raise ShapeMismatch("parameter shapes do not match the layer list")

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def with_flat(self, theta: np.ndarray) -> "NeuralModel":
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise ShapeMismatch(f"expected {self.n_params} parameters, got {theta.size}")
        params, k = [], 0
        for p in self.params:
            params.append(theta[k:k + p.size].reshape(p.shape).copy())
            k += p.size
        return NeuralModel(list(self.layers), params, list(self.labels), self.selu, self.input_shape)

    def copy(self) -> "NeuralModel":
        return self.with_flat(self.flat())

    def feature_index(self) -> int:
        """Index of the first dense layer; its input is the extracted feature vector."""
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Dense):
                return i
        return len(self.layers)



def build_model(layers: Sequence[Layer], labels: Sequence[str], seed: int = 0,
                selu: SELUConfig | None = None, input_shape=INPUT_SHAPE) -> NeuralModel:
    """Initialize parameters (He scaling) for ``layers``."""
    rng = np.random.default_rng(seed)
    shape, params = tuple(input_shape), []
    for layer in layers:
        params.extend(layer.init_params(shape, rng))
        shape = layer.out_shape(shape)
    return NeuralModel(list(layers), params, list(labels), selu or SELUConfig(), tuple(input_shape))


def default_layers(n_classes: int, conv_widths=(16, 32, 32), dense_widths=(64, 32),
                   dropout: float = 0.5, conv_activation: str = "relu") -> list[Layer]:
    """Pad/conv/pool cascades followed by a SELU dense head."""
    layers: list[Layer] = []
    for width in conv_widths:
        layers += [ZeroPad1d(1), Conv1d(width, 3, 1, conv_activation), MaxPool1d(2, 2)]
    layers.append(Flatten())
    for width in dense_widths:
        layers += [Dense(width, "selu"), Dropout(dropout)]
    layers.append(Dense(n_classes, "linear"))
    return layers


def default_model(labels: Sequence[str] = CLASS_LABELS, seed: int = 0, **kw) -> NeuralModel:
    return build_model(default_layers(len(labels), **kw), labels, seed)


def as_input(batch, model: NeuralModel) -> np.ndarray:
    """Accept complex (n, 128), real (n, 128, 2) or a single frame; return (n, L, C)."""
    x = np.asarray(batch)
    if np.iscomplexobj(x):
        x = np.stack([x.real, x.imag], axis=-1)
    x = np.asarray(x, dtype=float)
    if x.ndim == len(model.input_shape):
        x = x[None]
    if x.shape[1:] != tuple(model.input_shape):
        raise ShapeMismatch(f"expected input shape {model.input_shape}, got {x.shape[1:]}")
    return x


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _run(model: NeuralModel, x: np.ndarray, train: bool, rng, stop: int | None = None):
    caches, k = [], 0
    layers = model.layers if stop is None else model.layers[:stop]
    for layer in layers:
        params = model.params[k:k + layer.n_params]
        x, cache = layer.forward(x, params, train, rng, model.selu)
        caches.append(cache)
        k += layer.n_params
    return x, caches


def forward(model: NeuralModel, batch, train_mode: bool = False,
            rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(logits, scores)``; dropout is active only when ``train_mode``."""
    x = as_input(batch, model)
    if train_mode and rng is None:
        raise ValueError("train_mode forward needs an rng for dropout")
    logits, _ = _run(model, x, train_mode, rng)
    return logits, softmax(logits)


def predict_scores(model: NeuralModel, batch, chunk: int = 2048,
                   active: Sequence[int] | None = None) -> np.ndarray:
    x = as_input(batch, model)
    logits = np.concatenate([forward(model, x[i:i + chunk])[0] for i in range(0, len(x), chunk)])
    return softmax(_mask(logits, active))


def cross_entropy(scores: np.ndarray, onehot: np.ndarray) -> float:
    """Mean categorical cross-entropy with a 1e-12 floor inside the log."""
    scores = np.atleast_2d(scores)
    onehot = np.atleast_2d(onehot)
    return float(-np.mean(np.sum(onehot * np.log(np.maximum(scores, LOG_CLAMP)), axis=1)))


def one_hot(labels, m: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, m))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _mask(logits: np.ndarray, active) -> np.ndarray:
    if active is None:
        return logits
    out = np.full_like(logits, -np.inf)
    out[:, active] = logits[:, active]
    return out


def loss_and_gradient(model: NeuralModel, batch, labels, train_mode: bool = False,
                      rng: np.random.Generator | None = None,
                      active: Sequence[int] | None = None) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient as a flat parameter-aligned vector.

    ``active`` restricts the softmax to a subset of outputs (a task head);
    the remaining outputs receive no gradient.
    """
    x = as_input(batch, model)
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (len(x),):
        raise ShapeMismatch("one label per sample is required")
    logits, caches = _run(model, x, train_mode, rng)
    scores = softmax(_mask(logits, active))
    onehot = one_hot(labels, model.n_classes)
    loss = cross_entropy(scores, onehot)
    dy = (scores - onehot) / len(x)
    grads: list[np.ndarray] = []
    k = len(model.params)
    for layer, cache in zip(reversed(model.layers), reversed(caches)):
        params = model.params[k - layer.n_params:k]
        dy, g = layer.backward(dy, cache, params, model.selu)
        grads = g + grads
        k -= layer.n_params
    return loss, np.concatenate([g.ravel() for g in grads])


def gradient(model: NeuralModel, batch, labels) -> np.ndarray:
    return loss_and_gradient(model, batch, labels)[1]


def extract_features(model: NeuralModel, batch, chunk: int = 2048) -> np.ndarray:
    """Flattened conv/pool output feeding the dense head (inference mode)."""
    x = as_input(batch, model)
    stop = model.feature_index()
    out = [_run(model, x[i:i + chunk], False, None, stop)[0] for i in range(0, len(x), chunk)]
    feats = np.concatenate(out)
    return feats.reshape(len(x), -1)


def classify(model: NeuralModel, frame) -> tuple[SignalClass, np.ndarray]:
    """Argmax class of a 4-class model; ties go to the lowest class code."""
    if model.n_classes != len(SignalClass):
        raise ShapeMismatch("classify needs a 4-class model")
    scores = forward(model, frame)[1][0]
    return SignalClass(int(np.argmax(scores))), scores


def accuracy(model: NeuralModel, batch, labels, restrict: Sequence[int] | None = None) -> float:
    """Fraction correct; ``restrict`` limits the argmax to a subset of outputs."""
    pred = np.argmax(predict_scores(model, batch, active=restrict), axis=1)
    return float(np.mean(pred == np.asarray(labels)))


class EmptySet(ValueError):
    pass


def confusion_matrix(true_labels, pred_labels, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Counts (rows = true label) and the row-normalized matrix."""
    true_labels = np.asarray(true_labels, dtype=int)
    pred_labels = np.asarray(pred_labels, dtype=int)
    if true_labels.size == 0:
        raise EmptySet("confusion matrix of an empty set")
    counts = np.zeros((m, m), dtype=int)
    np.add.at(counts, (true_labels, pred_labels), 1)
    rows = counts.sum(axis=1, keepdims=True)
    norm = np.divide(counts, rows, out=np.zeros((m, m)), where=rows > 0)
    return counts, norm


def model_confusion(model: NeuralModel, batch, labels) -> tuple[np.ndarray, np.ndarray]:
    pred = np.argmax(predict_scores(model, batch), axis=1)
    return confusion_matrix(labels, pred, model.n_classes)


def numeric_gradient(model: NeuralModel, batch, labels, eps: float = 1e-5,
                     active: Sequence[int] | None = None) -> np.ndarray:
    """Central finite differences of the mean cross-entropy (slow; for checks)."""
    theta = model.flat()
    out = np.empty_like(theta)
    for i in range(theta.size):
        t = theta.copy()
        t[i] += eps
        hi = loss_and_gradient(model.with_flat(t), batch, labels, active=active)[0]
        t[i] -= 2 * eps
        lo = loss_and_gradient(model.with_flat(t), batch, labels, active=active)[0]
        out[i] = (hi - lo) / (2 * eps)
    return out


def gradient_agreement(analytic: np.ndarray, numeric: np.ndarray, rtol: float = 1e-4,
                       atol: float = 1e-8) -> float:
    """Fraction of coordinates where the two gradients agree to ``rtol`` (relative)."""
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    ok = (np.abs(analytic - numeric) <= rtol * scale) | (scale <= atol)
    return float(np.mean(ok))
