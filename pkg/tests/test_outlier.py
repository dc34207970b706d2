import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfdsa.outlier import (
    INLIER, OUTLIER, KMeansModel, MCDModel, TooFewSamples, Uncalibrated, _lloyd, kmeans_fit,
    kmeans_label_outlier_cluster, kmeans_plus_plus, mahalanobis, mcd_calibrate, mcd_fit, mcd_predict,
    reduce_features, sweep_contamination,
)


def fixed_model(mu, cov):
    mu, cov = np.asarray(mu, float), np.asarray(cov, float)
    return MCDModel(mu, cov, 1.0, np.linalg.cholesky(cov))


def test_mahalanobis_closed_forms():
    assert mahalanobis(fixed_model([0, 0], np.eye(2)), [0.0, 0.0]) == 0.0
    assert abs(mahalanobis(fixed_model([0, 0], np.eye(2)), [3.0, 4.0]) - 5.0) < 1e-9
    assert abs(mahalanobis(fixed_model([0, 0], np.diag([4.0, 1.0])), [2.0, 0.0]) - 1.0) < 1e-9


def test_mcd_gaussian_cloud():
    x = np.random.default_rng(0).standard_normal((2000, 2))
    m = mcd_fit(x, seed=0)
    assert np.all(np.abs(m.location) < 0.1)
    assert np.all(np.abs(m.covariance - np.eye(2)) < 0.15)


def test_mcd_resists_gross_outliers():
    rng = np.random.default_rng(1)
    clean = rng.standard_normal((1800, 2))
    dirty = np.vstack([clean, np.full((200, 2), 100.0)])
    a, b = mcd_fit(clean, seed=0), mcd_fit(dirty, seed=0)
    assert np.all(np.abs(a.location - b.location) < 0.15)
    assert np.all(np.abs(a.covariance - b.covariance) < 0.15)


def test_mcd_needs_more_than_2p():
    with pytest.raises(TooFewSamples):
        mcd_fit(np.random.default_rng(0).standard_normal((6, 3)))


def test_calibration_counts():
    x = np.random.default_rng(2).standard_normal((1000, 2))
    m = mcd_fit(x, seed=0)
    d = mahalanobis(m, x)
    cal = mcd_calibrate(m, x, 0.15)
    assert int(np.sum(d > cal.threshold)) == math.ceil(0.15 * 1000)
    tiny = mcd_calibrate(m, x, 1e-6)
    assert tiny.threshold == d.max() and np.sum(d > tiny.threshold) == 0
    half = mcd_calibrate(m, x, 0.5)
    assert abs(int(np.sum(d > half.threshold)) - 500) <= 1


def test_predict_boundary_rules():
    m = fixed_model([0, 0], np.eye(2))
    with pytest.raises(Uncalibrated):
        mcd_predict(m, [0.0, 0.0])
    from dataclasses import replace
    m = replace(m, threshold=2.0)
    assert mcd_predict(m, [0.0, 0.0]) == INLIER
    assert mcd_predict(m, [2.0, 0.0]) == INLIER
    assert mcd_predict(m, [20.0, 0.0]) == OUTLIER


def test_sweep_monotone_and_separable():
    rng = np.random.default_rng(3)
    tr, te = rng.standard_normal((500, 2)), rng.standard_normal((300, 2))
    near = rng.standard_normal((300, 2)) * 1.5 + 1.0
    res = sweep_contamination(tr, te, near)
    ins = [r[1] for r in res.rows]
    outs = [r[2] for r in res.rows]
    assert all(a >= b for a, b in zip(ins, ins[1:]))
    assert all(a <= b for a, b in zip(outs, outs[1:]))
    far = rng.standard_normal((300, 2)) + 50.0
    sep = sweep_contamination(tr, np.zeros((10, 2)), far)
    assert any(r[1] == 1.0 and r[2] == 1.0 for r in sep.rows)
    assert sum(r[0] == sep.selected for r in sep.rows) == 1


def test_sweep_csv(tmp_path):
    rng = np.random.default_rng(4)
    res = sweep_contamination(rng.standard_normal((200, 2)), rng.standard_normal((50, 2)),
                              rng.standard_normal((50, 2)) + 3, grid=(0.05, 0.1, 0.2))
    res.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "contamination,inlier_acc,outlier_acc,is_selected"
    assert sum(line.endswith(",1") for line in lines[1:]) == 1


def test_reduce_features_only_when_wide():
    a = np.ones((100, 10))
    assert reduce_features(a)[0].shape == (100, 10)
    b = np.random.default_rng(0).standard_normal((100, 64))
    out = reduce_features(b, b[:5], dim=16)
    assert out[0].shape == (100, 16) and out[1].shape == (5, 16)


def test_kmeans_point_masses():
    x = np.r_[np.zeros(50), np.full(50, 10.0)][:, None]
    m = kmeans_fit(x, 2, seed=0)
    assert sorted(m.centroids.ravel().tolist()) == [0.0, 10.0]


def test_kmeans_descends_and_keeps_best_restart():
    x = np.random.default_rng(5).standard_normal((300, 3))
    m = kmeans_fit(x, 3, seed=7)
    assert m.inertia_history[-1] <= m.inertia_history[0]
    rng = np.random.default_rng(7)
    finals = [_lloyd(x, kmeans_plus_plus(x, 3, rng), 300, 1e-6)[1][-1] for _ in range(10)]
    assert m.inertia == min(finals)


def test_kmeans_outlier_cluster_labeling():
    m = KMeansModel(np.array([[0.0], [10.0]]), 0.0)
    lab = kmeans_label_outlier_cluster(m, np.zeros((5, 1)))
    assert lab.outlier_cluster_id == 1
    assert list(lab.predict([[0.5], [9.0]])) == [INLIER, OUTLIER]
    # tie: neither cluster holds inliers if both are equally represented; farther centroid wins
    tie = kmeans_label_outlier_cluster(KMeansModel(np.array([[0.0], [10.0]]), 0.0), np.array([[1.0], [9.5]]))
    assert tie.outlier_cluster_id == 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.01, 0.5))
def test_calibrated_flag_fraction(seed, c):
    x = np.random.default_rng(seed).standard_normal((200, 2))
    m = mcd_calibrate(mcd_fit(x, seed=seed), x, c)
    flagged = np.sum(mcd_predict(m, x) == OUTLIER)
    assert flagged == math.floor(c * 200 + 1e-9)
