import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfdsa.nnet import (
    AdamState, Conv1d, Dense, Flatten, MaxPool1d, ShapeMismatch, TrainConfig, ZeroPad1d, adam_step,
    build_model, classify, confusion_matrix, cross_entropy, default_model, ewc_loss, extract_features,
    fisher_diagonal, forward, gradient, gradient_agreement, numeric_gradient, one_hot, train,
)
from rfdsa.nnet import checkpoint
from rfdsa.nnet.ewc import FisherDiag
from rfdsa.sigsynth import DatasetSpec, SignalClass, make_dataset


def dense_model(weights, bias, activation="linear"):
    m = build_model([Dense(len(bias), activation)], ["a", "b"][:len(bias)] + ["c", "d"][:max(0, len(bias) - 2)],
                    input_shape=(np.shape(weights)[0],))
    return m.with_flat(np.r_[np.ravel(weights), bias])


def test_default_model_shapes():
    m = default_model()
    assert m.n_params == sum(p.size for p in m.params)
    assert forward(m, np.zeros((3, 128, 2)))[1].shape == (3, 4)
    assert extract_features(m, np.zeros((2, 128, 2))).shape == (2, 16 * 32)


def test_pool_must_tile():
    with pytest.raises(ShapeMismatch):
        build_model([MaxPool1d(2, 2), Flatten(), Dense(2, "linear")], ["a", "b"], input_shape=(7, 2))


def test_zero_params_give_uniform_scores():
    m = default_model()
    m = m.with_flat(np.zeros(m.n_params))
    scores = forward(m, np.random.default_rng(0).standard_normal((5, 128, 2)))[1]
    np.testing.assert_allclose(scores, 0.25)


def test_hand_computed_logits():
    w = np.array([[1.0, 2.0], [3.0, -1.0]])
    m = dense_model(w, np.array([0.5, -0.5]))
    logits, _ = forward(m, np.array([[1.0, 2.0]]))
    np.testing.assert_allclose(logits, [[7.5, -0.5]])


def test_eval_forward_is_deterministic():
    m = default_model(seed=3)
    x = np.random.default_rng(1).standard_normal((4, 128, 2))
    assert np.array_equal(forward(m, x)[0], forward(m, x)[0])


def test_cross_entropy_closed_forms():
    assert cross_entropy(np.array([[0.0, 1.0]]), np.array([[0.0, 1.0]])) == 0.0
    assert math.isclose(cross_entropy(np.full((1, 4), 0.25), one_hot([2], 4)), math.log(4), rel_tol=1e-12)
    assert math.isclose(cross_entropy(np.array([[0.5, 0.5]]), one_hot([0], 2)), math.log(2), rel_tol=1e-12)


def test_gradient_zero_params_matches_finite_difference():
    m = dense_model(np.zeros((3, 2)), np.zeros(2))
    x = np.array([[1.0, -2.0, 0.5], [0.3, 0.1, -1.0]])
    y = [0, 1]
    assert gradient_agreement(gradient(m, x, y), numeric_gradient(m, x, y)) == 1.0


def test_gradient_finite_difference_small_cnn():
    layers = [ZeroPad1d(1), Conv1d(3, 3, 1, "relu"), MaxPool1d(2, 2), Flatten(), Dense(4, "selu"), Dense(3, "linear")]
    m = build_model(layers, ["a", "b", "c"], seed=2, input_shape=(12, 2))
    rng = np.random.default_rng(2)
    x, y = rng.standard_normal((5, 12, 2)), rng.integers(0, 3, 5)
    assert gradient_agreement(gradient(m, x, y), numeric_gradient(m, x, y)) >= 0.99


def test_duplicate_sample_gradient_is_mean_invariant():
    m = default_model(seed=1)
    x = np.random.default_rng(2).standard_normal((1, 128, 2))
    np.testing.assert_allclose(gradient(m, np.repeat(x, 2, axis=0), [1, 1]), gradient(m, x, [1]), atol=1e-12)


def test_adam_closed_form_first_step():
    cfg = TrainConfig(learning_rate=0.01)
    p = np.array([1.0, -2.0, 3.0])
    same, _ = adam_step(p, np.zeros(3), AdamState.zeros(3), cfg)
    np.testing.assert_array_equal(same, p)
    new, state = adam_step(p, np.array([0.3, -5.0, 2.0]), AdamState.zeros(3), cfg)
    np.testing.assert_allclose(np.abs(new - p), 0.01, rtol=1e-6)
    a1, s1 = adam_step(new, np.ones(3), state, cfg)
    a2, s2 = adam_step(new, np.ones(3), state.copy(), cfg)
    assert np.array_equal(a1, a2) and s1.t == s2.t == 2


def _separable(n=400, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    y = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(int)
    x += np.where(y[:, None] == 1, 0.3, -0.3)
    return x, y


def test_train_separable_toy_and_converged_gradient():
    x, y = _separable()
    m = build_model([Dense(2, "linear")], ["a", "b"], input_shape=(2,))
    trained, hist = train(m, x, y, TrainConfig(learning_rate=0.05, max_epochs=50, patience=50))
    assert max(hist.column("val_acc")) >= 0.99
    # a well-separated problem with a margin; fit to convergence then check stationarity
    xs = np.array([[-1.0, 0.0], [1.0, 0.0], [-2.0, 0.0], [2.0, 0.0]])
    ys = np.array([0, 1, 0, 1])
    ridge = FisherDiag(np.ones(m.n_params), np.zeros(m.n_params), lam=0.1)
    toy, _ = train(m, np.repeat(xs, 16, 0), np.repeat(ys, 16), TrainConfig(learning_rate=0.05, max_epochs=400,
                   patience=400, batch_size=64), penalty=ridge.penalty, validation=(xs, ys))
    g = gradient(toy, np.repeat(xs, 16, 0), np.repeat(ys, 16)) + ridge.penalty(toy.flat())[1]
    assert np.linalg.norm(g) < 1e-3


def test_early_stopping_returns_first_epoch_snapshot():
    x, y = _separable(200, 1)
    m = build_model([Dense(2, "linear")], ["a", "b"], input_shape=(2,))
    seen = []
    out, hist = train(m, x, y, TrainConfig(learning_rate=0.05, max_epochs=20, patience=1),
                      validation=(x, 1 - y), on_epoch=lambda e, mm: seen.append(mm.flat().copy()) or {})
    assert len(hist.rows) == 2 and hist.best_epoch == 1 and hist.stopped_early
    np.testing.assert_array_equal(out.flat(), seen[0])


def test_fisher_dead_parameter_and_linearity():
    layers = [Dense(3, "relu"), Dense(2, "linear")]
    m = build_model(layers, ["a", "b"], seed=0, input_shape=(4,))
    w2 = m.params[2].copy()
    w2[0] = 0.0
    m = m.with_flat(np.r_[m.params[0].ravel(), m.params[1], w2.ravel(), m.params[3]])
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((20, 4)), rng.integers(0, 2, 20)
    f = fisher_diagonal(m, x, y)
    dead = np.zeros((4, 3), bool)
    dead[:, 0] = True
    assert np.all(f.values[:12][dead.ravel()] == 0.0) and f.values[12] == 0.0
    assert np.array_equal(f.values, fisher_diagonal(m, x, y).values)
    half = 0.5 * (fisher_diagonal(m, x[:10], y[:10]).values + fisher_diagonal(m, x[10:], y[10:]).values)
    np.testing.assert_allclose(f.values, half, rtol=1e-12, atol=1e-15)


def test_fisher_subsample_spans_class_ordered_data():
    m = build_model([Dense(3, "selu"), Dense(2, "linear")], ["a", "b"], seed=1, input_shape=(4,))
    rng = np.random.default_rng(2)
    x, y = rng.standard_normal((30, 4)), np.repeat([0, 1], 15)
    sub = fisher_diagonal(m, x, y, max_samples=6)
    idx = [0, 6, 12, 17, 23, 29]
    np.testing.assert_array_equal(sub.values, fisher_diagonal(m, x[idx], y[idx]).values)
    assert np.array_equal(fisher_diagonal(m, x, y, max_samples=100).values, fisher_diagonal(m, x, y).values)


def test_ewc_loss_cases():
    m = default_model(seed=4)
    x = np.random.default_rng(3).standard_normal((6, 128, 2))
    y = np.array([0, 1, 2, 3, 0, 1])
    ce = cross_entropy(forward(m, x)[1], one_hot(y, 4))
    f0 = FisherDiag(np.ones(m.n_params), m.flat() + 1.0, lam=0.0)
    assert ewc_loss(m, x, y, f0) == ce
    assert FisherDiag(np.ones(m.n_params), m.flat(), lam=5.0).penalty(m.flat())[0] == 0.0
    anchor = m.flat() + np.random.default_rng(0).standard_normal(m.n_params) * 0.01
    f2 = FisherDiag(np.ones(m.n_params), anchor, lam=2.0)
    assert math.isclose(f2.penalty(m.flat())[0], float(np.sum((m.flat() - anchor) ** 2)), rel_tol=1e-12)


def test_classify_argmax_and_tie():
    m = build_model([Flatten(), Dense(4, "linear")], [c.label for c in SignalClass], input_shape=(128, 2))
    z = m.with_flat(np.zeros(m.n_params))
    cls, scores = classify(z, np.zeros((128, 2)))
    assert cls is SignalClass.IDLE and np.allclose(scores, 0.25)
    bias = np.log([0.7, 0.1, 0.1, 0.1])
    b = m.with_flat(np.r_[np.zeros(m.n_params - 4), bias])
    assert classify(b, np.zeros((128, 2)))[0] is SignalClass.IDLE


def test_confusion_matrix_cases():
    labels = np.arange(4).repeat(3)
    _, norm = confusion_matrix(labels, labels, 4)
    np.testing.assert_array_equal(norm, np.eye(4))
    counts, _ = confusion_matrix([2], [1], 4)
    assert counts.sum() == 1 and counts[2, 1] == 1
    rng = np.random.default_rng(0)
    _, norm = confusion_matrix(np.arange(4).repeat(1000), rng.integers(0, 4, 4000), 4)
    assert np.all(np.abs(norm - 0.25) <= 0.03)


def test_checkpoint_roundtrip(tmp_path):
    m = default_model(seed=9)
    h1 = checkpoint.save(m, tmp_path / "a.ck")
    h2 = checkpoint.save(default_model(seed=9), tmp_path / "b.ck")
    assert h1 == h2
    back = checkpoint.load(tmp_path / "a.ck")
    assert np.array_equal(back.flat(), m.flat()) and back.labels == m.labels


def test_trained_features_separate_qpsk_and_qam64():
    kinds = ["QPSK", "QAM64"]
    ds = make_dataset(DatasetSpec(tuple(kinds), (18.0,), 300, seed=5))
    y = np.array([kinds.index(str(k)) for k in ds.modkinds])
    m, _ = train(default_model(kinds, seed=0), ds.channels(), y,
                 TrainConfig(learning_rate=1e-3, max_epochs=40, patience=5))
    test = make_dataset(DatasetSpec(tuple(kinds), (18.0,), 200, seed=6))
    f = extract_features(m, test.channels())
    yt = np.array([kinds.index(str(k)) for k in test.modkinds])
    c0, c1 = f[yt == 0].mean(0), f[yt == 1].mean(0)
    # spread measured along the line joining the centroids
    u = (c1 - c0) / np.linalg.norm(c1 - c0)
    spread = np.mean([(f[yt == k] @ u).std() for k in (0, 1)])
    assert np.linalg.norm(c0 - c1) > 2 * spread


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_scores_are_distributions(seed):
    m = default_model(seed=seed % 7)
    s = forward(m, np.random.default_rng(seed).standard_normal((3, 128, 2)))[1]
    assert np.all(s >= 0) and np.allclose(s.sum(1), 1.0)
