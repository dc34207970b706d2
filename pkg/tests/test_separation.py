import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfdsa.separation import (
    MixtureObservation, RankDeficient, fastica, matched_correlation, random_orthogonal, separate, whiten,
    write_trials_csv,
)
from rfdsa.sigsynth import apply_awgn, superimpose, synth_clean


def sources(rng, n=256):
    return np.stack([rng.choice([-3.0, -1.0, 1.0, 3.0], size=n), rng.uniform(-1, 1, size=n)])


def test_whitened_covariance_is_identity():
    rng = np.random.default_rng(0)
    x = np.array([[2.0, 1.0], [0.5, 3.0]]) @ rng.standard_normal((2, 500))
    xw, t, mean = whiten(x)
    np.testing.assert_allclose(xw @ xw.T / xw.shape[1], np.eye(2), atol=1e-8)
    np.testing.assert_allclose(xw, t @ (x - mean), atol=1e-12)


def test_whitening_white_input_is_orthogonal():
    rng = np.random.default_rng(1)
    x, _, _ = whiten(rng.standard_normal((2, 4000)))
    _, t, _ = whiten(x)
    np.testing.assert_allclose(t @ t.T, np.eye(2), atol=1e-8)


def test_duplicate_rows_rank_deficient():
    row = np.random.default_rng(2).standard_normal(256)
    with pytest.raises(RankDeficient):
        whiten(np.stack([row, row]))


def test_independent_sources_give_signed_permutation():
    s = sources(np.random.default_rng(3), 2000)
    xw, t, _ = whiten(s)
    res = fastica(xw, seed=1)
    full = res.unmixing @ t
    full = full / np.abs(full).max(axis=1, keepdims=True)
    assert res.converged
    np.testing.assert_allclose(np.sort(np.abs(full), axis=1), [[0, 1], [0, 1]], atol=0.1)


def test_known_mixing_recovery():
    rng = np.random.default_rng(4)
    for _ in range(50):
        s = sources(rng)
        a = rng.standard_normal((2, 2)) + 2 * np.eye(2)
        xw, _, _ = whiten(a @ s)
        assert matched_correlation(fastica(xw, seed=int(rng.integers(1000))).sources, s) >= 0.95


def test_gaussian_sources_are_not_identifiable():
    rng = np.random.default_rng(5)
    xw, _, _ = whiten(rng.standard_normal((2, 256)))
    res = fastica(xw, max_iter=50, seed=0)
    # any orthogonal W is a valid answer; only the decorrelation constraint holds
    np.testing.assert_allclose(res.unmixing @ res.unmixing.T, np.eye(2), atol=1e-8)


def test_separate_frames_recover_mixed_sources():
    rng = np.random.default_rng(6)
    a, b = synth_clean("PAM4", rng), synth_clean("GFSK", rng)
    m = random_orthogonal(rng)
    o1, o2 = superimpose(a, b, m)
    res, frames = separate(MixtureObservation(o1, o2, m))
    rec = np.stack([np.r_[f.samples.real, f.samples.imag] for f in frames])
    truth = np.stack([np.r_[a.samples.real, a.samples.imag], np.r_[b.samples.real, b.samples.imag]])
    assert matched_correlation(rec, truth) > 0.9
    assert all(abs(f.power - 1.0) < 1e-9 for f in frames)


def test_identity_mixing_with_idle_keeps_noise_component():
    rng = np.random.default_rng(7)
    a = synth_clean("QPSK", rng)
    noise = apply_awgn(synth_clean("idle", rng), 10.0, rng)
    _, frames = separate(MixtureObservation(a, noise, np.eye(2)))
    corr = [abs(np.corrcoef(np.r_[f.samples.real, f.samples.imag],
                            np.r_[noise.samples.real, noise.samples.imag])[0, 1]) for f in frames]
    assert max(corr) > 0.95


def test_trials_csv(tmp_path):
    rows = [{"trial_id": 0, "snr_db": 10.0, "true_pair": "Jammer+OutNetwork",
             "predicted_pair": "Jammer+OutNetwork", "correct": 1}]
    write_trials_csv(rows, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "trial_id,snr_db,true_pair,predicted_pair,correct"


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_random_orthogonal(seed):
    m = random_orthogonal(np.random.default_rng(seed))
    np.testing.assert_allclose(m @ m.T, np.eye(2), atol=1e-12)
