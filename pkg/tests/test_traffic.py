import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfdsa.sigsynth import SignalClass
from rfdsa.traffic import (
    FusionInput, MarkovProfile, deep_state, fuse, predict, profile_update, resolve_class, state_of,
    transition_prob,
)


def test_update_trace_and_ratio():
    p = profile_update(MarkovProfile(), 0, 1)
    assert p.as_tuple() == (1, 2, 1, 1)
    assert transition_prob(p, 0, 1) == pytest.approx(2 / 3)


def test_fresh_profile_is_uniform_and_ties_keep_state():
    p = MarkovProfile()
    assert all(transition_prob(p, i, j) == 0.5 for i in (0, 1) for j in (0, 1))
    assert predict(p, 0) == (0, 0.5) and predict(p, 1) == (1, 0.5)


def test_predict_argmax():
    assert predict(MarkovProfile([[8, 2], [1, 1]]), 0) == (0, pytest.approx(0.8))
    assert predict(MarkovProfile([[1, 9], [1, 1]]), 0) == (1, pytest.approx(0.9))


def test_estimator_converges_on_symmetric_chain():
    rng = np.random.default_rng(11)
    p = MarkovProfile()
    s = 0
    p.observe(s)
    for _ in range(999):
        s = s if rng.random() < 0.8 else 1 - s
        p.observe(s)
    assert abs(transition_prob(p, 0, 0) - 0.8) <= 0.05
    assert abs(transition_prob(p, 1, 1) - 0.8) <= 0.05


def test_fuse_worked_case():
    # q = 0.2 * 0.8 + 0.8 * (1 - 0.9) = 0.24 < 0.5
    state, conf = fuse(FusionInput(0, 0.8, 1, 0.9, 0.2))
    assert state == 1 and conf == pytest.approx(0.76)


def test_fuse_agreement_and_limits():
    assert fuse(FusionInput(1, 0.7, 1, 0.6)) == (1, 0.6)
    assert fuse(FusionInput(0, 0.7, 1, 0.99, w=1.0))[0] == 0
    assert fuse(FusionInput(1, 0.99, 0, 0.7, w=0.0)) == (0, pytest.approx(0.7))


def test_fusion_input_validation():
    with pytest.raises(ValueError):
        FusionInput(0, 0.4, 1, 0.9)
    with pytest.raises(ValueError):
        FusionInput(2, 0.8, 1, 0.9)


def test_deep_state_and_resolution():
    assert state_of(SignalClass.OUT_NETWORK) == 1 and state_of(SignalClass.JAMMER) == 0
    assert deep_state([0.1, 0.1, 0.1, 0.7]) == (1, pytest.approx(0.7))
    assert deep_state([0.6, 0.2, 0.1, 0.1]) == (0, pytest.approx(0.9))
    cls, score = resolve_class(0, [0.1, 0.5, 0.2, 0.2])
    assert cls is SignalClass.IN_NETWORK and score == pytest.approx(0.625)
    assert resolve_class(1, [0.1, 0.5, 0.2, 0.2])[0] is SignalClass.OUT_NETWORK


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=60))
def test_counts_grow_by_one_and_rows_sum_to_one(seq):
    p = MarkovProfile()
    p.observe(seq[0])
    for s in seq[1:]:
        before = p.total
        p.observe(s)
        assert p.total == before + 1
    for i in (0, 1):
        assert transition_prob(p, i, 0) + transition_prob(p, i, 1) == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 1), st.floats(0.5, 1.0), st.integers(0, 1), st.floats(0.5, 1.0), st.floats(0, 1))
def test_fused_confidence_in_range(st_, ct, sd, cd, w):
    state, conf = fuse(FusionInput(st_, ct, sd, cd, w))
    assert state in (0, 1) and 0.5 <= conf <= 1.0
