import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfdsa.sigsynth import (
    FRAME_LEN, SAMPLES_PER_SYMBOL, DatasetSpec, IQFrame, ModulationKind, SignalClass, SingularMixing,
    apply_awgn, class_of, make_dataset, read_dataset_csv, rotate_frame, superimpose, synth_clean,
    synth_frame, write_dataset_csv,
)

KINDS = [k for k in ModulationKind]


@pytest.mark.parametrize("kind", KINDS)
def test_clean_frame_shape_and_unit_power(kind):
    f = synth_clean(kind, np.random.default_rng(1))
    assert f.samples.shape == (FRAME_LEN,)
    assert np.all(np.isfinite(f.samples))
    assert abs(f.power - 1.0) < 1e-9


def test_idle_clean_is_zero_and_noisy_idle_has_floor():
    rng = np.random.default_rng(0)
    assert np.all(synth_clean("idle", rng).samples == 0)
    f = synth_frame("idle", 0.0, rng)
    assert 0.5 < f.power < 1.5


def test_pam4_noiseless_is_real():
    f = synth_frame("PAM4", math.inf, np.random.default_rng(3))
    assert np.all(f.samples.imag == 0)


def test_qpsk_symbol_centres_on_diagonals():
    f = synth_clean("QPSK", np.random.default_rng(4))
    pts = f.samples[::SAMPLES_PER_SYMBOL]
    radius = np.abs(pts)
    np.testing.assert_allclose(radius, radius[0], atol=1e-9)
    ang = np.angle(pts)
    targets = np.pi / 4 + np.pi / 2 * np.arange(4)
    for a in ang:
        d = np.abs(np.angle(np.exp(1j * (a - targets))))
        assert d.min() < 1e-9


def test_qam64_measured_snr():
    rng = np.random.default_rng(5)
    sig, noise = 0.0, 0.0
    for _ in range(10_000):
        clean = synth_clean("QAM64", rng)
        noisy = apply_awgn(clean, 18.0, rng)
        sig += clean.power
        noise += np.mean(np.abs(noisy.samples - clean.samples) ** 2)
    assert abs(10 * np.log10(sig / noise) - 18.0) < 0.2


def test_awgn_at_zero_db_matches_signal_power():
    rng = np.random.default_rng(6)
    ratios = []
    for _ in range(10_000):
        clean = synth_clean("QPSK", rng)
        noisy = apply_awgn(clean, 0.0, rng)
        ratios.append(np.mean(np.abs(noisy.samples - clean.samples) ** 2))
    assert abs(np.mean(ratios) - 1.0) < 0.05


def test_awgn_infinite_snr_is_identity_and_seeded():
    f = synth_clean("8PSK", np.random.default_rng(7))
    assert np.array_equal(apply_awgn(f, math.inf, np.random.default_rng(0)).samples, f.samples)
    a = apply_awgn(f, 5.0, np.random.default_rng(9)).samples
    b = apply_awgn(f, 5.0, np.random.default_rng(9)).samples
    assert np.array_equal(a, b)


def test_rotation_grid_and_involution():
    f = synth_frame("QAM64", 18.0, np.random.default_rng(8))
    assert np.array_equal(rotate_frame(f, 0.0).samples, f.samples)
    twice = rotate_frame(rotate_frame(f, np.pi), np.pi)
    np.testing.assert_allclose(twice.samples, f.samples, atol=1e-12)
    k = 1
    np.testing.assert_allclose(rotate_frame(f, k * np.pi / 16).samples, f.samples * np.exp(1j * np.pi / 16))


def test_superimpose_identity_and_cancellation():
    rng = np.random.default_rng(10)
    a, b = synth_clean("QPSK", rng), synth_clean("WBFM", rng)
    o1, o2 = superimpose(a, b, np.eye(2))
    assert np.array_equal(o1.samples, a.samples) and np.array_equal(o2.samples, b.samples)
    _, z = superimpose(a, a, [[1, 1], [1, -1]])
    assert np.all(z.samples == 0)
    with pytest.raises(SingularMixing):
        superimpose(a, b, [[1, 1], [1, 1]])


def test_superimpose_power_of_orthogonal_mixing():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a, b = synth_clean("QPSK", rng), synth_clean("WBFM", rng)
        th = rng.uniform(0, 2 * np.pi)
        m = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        obs = superimpose(a, b, m)
        for row, o in zip(m, obs):
            cross = 2 * row[0] * row[1] * np.mean(np.real(a.samples * np.conj(b.samples)))
            expected = row[0] ** 2 * a.power + row[1] ** 2 * b.power
            # independent sources: the cross term is small relative to the total
            assert abs(o.power - (expected + cross)) < 1e-9
            assert abs(o.power - expected) < 0.35


def test_class_map():
    assert class_of("QPSK") is SignalClass.IN_NETWORK
    assert class_of("WBFM") is SignalClass.JAMMER
    assert class_of("GFSK") is SignalClass.OUT_NETWORK
    assert class_of("idle") is SignalClass.IDLE
    assert SignalClass.OUT_NETWORK.label == "OutNetwork"


def test_dataset_counts_and_determinism(tmp_path):
    spec = DatasetSpec(("QPSK", "GFSK"), (0.0, 10.0), 3, seed=4)
    a, b = make_dataset(spec), make_dataset(spec)
    assert len(a) == 12
    assert np.array_equal(a.iq, b.iq)
    assert len(make_dataset(DatasetSpec(("QPSK",), (0.0,), 1))) == 1
    write_dataset_csv(a, tmp_path / "d.csv")
    c = read_dataset_csv(tmp_path / "d.csv")
    np.testing.assert_allclose(c.iq, a.iq, rtol=1e-12)
    assert list(c.classes) == list(a.classes)


def test_dataset_rejects_empty_grid():
    with pytest.raises(ValueError):
        DatasetSpec(("QPSK",), (), 1)


def test_frame_rejects_bad_length():
    with pytest.raises(ValueError):
        IQFrame(np.zeros(10), 0.0, "idle")


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(KINDS), seed=st.integers(0, 2**31), snr=st.floats(-10, 30))
def test_any_frame_finite(kind, seed, snr):
    f = synth_frame(kind, snr, np.random.default_rng(seed))
    assert f.samples.shape == (FRAME_LEN,) and np.all(np.isfinite(f.samples))


@settings(max_examples=25, deadline=None)
@given(theta=st.floats(-10, 10), seed=st.integers(0, 1000))
def test_rotation_preserves_power(theta, seed):
    f = synth_frame("QAM16", 10.0, np.random.default_rng(seed))
    assert abs(rotate_frame(f, theta).power - f.power) < 1e-9
