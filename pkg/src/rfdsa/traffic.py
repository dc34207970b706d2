"""Two-state Markov profile of out-network activity and its fusion with the classifier.

State 0 means no out-network transmission (idle, in-network or jammer on the
channel); state 1 means an out-network user is transmitting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from rfdsa.sigsynth import SignalClass


def state_of(cls: SignalClass) -> int:
    """OutNetwork maps to 1, every other class to 0."""
    return 1 if SignalClass(cls) is SignalClass.OUT_NETWORK else 0


def _check_state(s) -> int:
    if s not in (0, 1):
        raise ValueError(f"state must be 0 or 1, got {s!r}")
    return int(s)


@dataclass
class MarkovProfile:
    """Transition counts ``n[i, j]``, all starting at one."""

    counts: np.ndarray = None
    last_state: Optional[int] = None

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.ones((2, 2), dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(2, 2)
        if np.any(self.counts < 1):
            raise ValueError("transition counts must be >= 1")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def as_tuple(self) -> tuple[int, int, int, int]:
        return tuple(int(v) for v in self.counts.ravel())

    def observe(self, state: int) -> "MarkovProfile":
        """Record the next state, counting a transition from the previous one if any."""
        state = _check_state(state)
        if self.last_state is not None:
            profile_update(self, self.last_state, state)
        self.last_state = state
        return self


def profile_update(profile: MarkovProfile, prev: int, cur: int) -> MarkovProfile:
    profile.counts[_check_state(prev), _check_state(cur)] += 1
    return profile


def transition_prob(profile: MarkovProfile, i: int, j: int) -> float:
    i, j = _check_state(i), _check_state(j)
    row = profile.counts[i]
    return float(row[j] / (row[0] + row[1]))


def predict(profile: MarkovProfile, s_prev: int) -> tuple[int, float]:
    """Most likely next state and its probability; a tie keeps ``s_prev`` with 0.5."""
    s_prev = _check_state(s_prev)
    stay = profile.counts[s_prev, s_prev]
    move = profile.counts[s_prev, 1 - s_prev]
    if stay == move:
        return s_prev, 0.5
    if stay > move:
        return s_prev, transition_prob(profile, s_prev, s_prev)
    return 1 - s_prev, transition_prob(profile, s_prev, 1 - s_prev)


@dataclass(frozen=True)
class FusionInput:
    s_traffic: int
    c_traffic: float
    s_deep: int
    c_deep: float
    w: float = 0.2

    def __post_init__(self):
        _check_state(self.s_traffic)
        _check_state(self.s_deep)
        for name in ("c_traffic", "c_deep"):
            v = getattr(self, name)
            if not 0.5 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0.5, 1], got {v}")
        if not 0.0 <= self.w <= 1.0:
            raise ValueError("w must lie in [0, 1]")


def fuse(inp: FusionInput) -> tuple[int, float]:
    """Combine the traffic prediction with the classifier decision.

    Returns ``(state, confidence)``. When the two agree the shared state is
    returned with the classifier's confidence. Otherwise ``q`` is the weighted
    confidence that the state is 0; ``q < 0.5`` gives state 1 with confidence
    ``1 - q``, anything else gives state 0 with confidence ``q``.
    """
    if inp.s_traffic == inp.s_deep:
        return inp.s_deep, inp.c_deep
    w = inp.w
    if inp.s_traffic == 0:
        q = w * inp.c_traffic + (1.0 - w) * (1.0 - inp.c_deep)
    else:
        q = w * (1.0 - inp.c_traffic) + (1.0 - w) * inp.c_deep
    if q < 0.5:
        return 1, 1.0 - q
    return 0, q


def deep_state(scores) -> tuple[int, float]:
    """Busy/idle decision from a 4-class score vector with confidence in [0.5, 1]."""
    scores = np.asarray(scores, dtype=float)
    p1 = float(scores[SignalClass.OUT_NETWORK])
    total = float(scores.sum()) or 1.0
    p1 /= total
    if p1 > 0.5:
        return 1, p1
    return 0, 1.0 - p1


def resolve_class(state: int, scores) -> tuple[SignalClass, float]:
    """Concrete class after fusion.

    State 1 is OutNetwork. For state 0 the best of idle, in-network and jammer
    is taken and its score renormalized over those three.
    """
    scores = np.asarray(scores, dtype=float)
    if _check_state(state) == 1:
        return SignalClass.OUT_NETWORK, float(scores[SignalClass.OUT_NETWORK])
    head = scores[:3]
    total = head.sum()
    if total <= 0:
        return SignalClass.IDLE, 1.0 / 3.0
    k = int(np.argmax(head))
    return SignalClass(k), float(head[k] / total)
