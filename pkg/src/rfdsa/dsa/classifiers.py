"""Channel sensing and the pluggable classifiers that turn it into a status."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from rfdsa.dsa.channel import SinrConfig, db
from rfdsa.dsa.topology import Topology
from rfdsa.sigsynth import SignalClass, kinds_of_class, synth_frame

SNR_GRID = np.arange(0, 20, 2, dtype=float)
# Accuracy by SNR for the base classifier, the outlier detector and the
# superposition pipeline (0..18 dB in 2 dB steps).
TABLE_BASE = (0.906, 0.930, 0.928, 0.933, 0.934, 0.942, 0.950, 0.951, 0.933, 0.934)
TABLE_OUTLIER = (0.822, 0.814, 0.824, 0.832, 0.845, 0.843, 0.844, 0.847, 0.844, 0.839)
TABLE_SUPERPOSED = (0.851, 0.820, 0.857, 0.843, 0.827, 0.824, 0.834, 0.843, 0.830, 0.841)
OVERALL_ACCURACY = 0.934

CLASSIFIER_KINDS = ("ideal", "random", "table-all", "table-per-snr", "model")


@dataclass(frozen=True)
class ChannelStatus:
    cls: SignalClass
    score: float
    scores: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must lie in [0, 1]")


@dataclass(frozen=True)
class Observation:
    """What a node's antenna sees during sensing: the two strongest in-range emitters."""

    truth: SignalClass
    snr_db: float
    second: Optional[SignalClass] = None
    second_snr_db: Optional[float] = None


def table_row(table: Sequence[float], snr_db: float) -> float:
    """Accuracy at the grid point at or below ``snr_db`` (clamped to 0..18 dB)."""
    k = int(np.clip(np.floor(snr_db / 2.0), 0, len(table) - 1)) if np.isfinite(snr_db) else len(table) - 1
    return float(table[k])


def observe(topo: Topology, sinr: SinrConfig, node: int, emitters: dict[int, SignalClass]) -> Observation:
    """Dominant class at ``node``.

    ``emitters`` maps active source ids to their class. Only sources within
    range count. An out-network user in range wins even over stronger
    sources, since any detected out-network activity must silence the node.
    """
    ids = [e for e in emitters if e != node and topo.dist[node, e] <= topo.radius]
    if not ids:
        return Observation(SignalClass.IDLE, np.inf)
    g = sinr.gain(topo.dist[node, ids])
    order = np.argsort(-g, kind="stable")
    ids = [ids[i] for i in order]
    g = g[order]
    total = g.sum()
    snrs = db(g / (sinr.noise + total - g))
    out = [i for i, e in enumerate(ids) if emitters[e] is SignalClass.OUT_NETWORK]
    first = out[0] if out else 0
    rest = [i for i in range(len(ids)) if i != first]
    second = rest[0] if rest else None
    return Observation(
        emitters[ids[first]], float(snrs[first]),
        None if second is None else emitters[ids[second]],
        None if second is None else float(snrs[second]))


def _table_scores(pred: SignalClass, acc: float) -> np.ndarray:
    s = np.full(4, (1.0 - acc) / 3.0)
    s[int(pred)] = acc
    return s


def _confuse(truth: SignalClass, acc: float, rng: np.random.Generator) -> SignalClass:
    if rng.random() < acc:
        return truth
    others = [c for c in SignalClass if c is not truth]
    return others[rng.integers(len(others))]


class SignalClassifier:
    """Maps an observation to a 4-class score vector."""

    kind = ""

    def scores(self, obs: Observation, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def accuracy(self, snr_db: float) -> float:
        return 1.0

    def status(self, obs: Observation, rng: np.random.Generator) -> ChannelStatus:
        s = self.scores(obs, rng)
        k = int(np.argmax(s))
        return ChannelStatus(SignalClass(k), float(s[k]), s)


class IdealClassifier(SignalClassifier):
    kind = "ideal"

    def scores(self, obs, rng):
        s = np.zeros(4)
        s[int(obs.truth)] = 1.0
        return s


class RandomClassifier(SignalClassifier):
    """Uniform random class; scores drawn from a flat Dirichlet."""

    kind = "random"

    def accuracy(self, snr_db):
        return 0.25

    def scores(self, obs, rng):
        return rng.dirichlet(np.ones(4))


class TableClassifier(SignalClassifier):
    """Correct with the tabulated probability; errors are uniform over the other classes."""

    def __init__(self, per_snr: bool):
        self.per_snr = per_snr
        self.kind = "table-per-snr" if per_snr else "table-all"

    def accuracy(self, snr_db):
        if self.per_snr and np.isfinite(snr_db):
            return table_row(TABLE_BASE, snr_db)
        return OVERALL_ACCURACY

    def scores(self, obs, rng):
        acc = self.accuracy(obs.snr_db)
        return _table_scores(_confuse(obs.truth, acc, rng), acc)


class ModelClassifier(SignalClassifier):
    """Runs a trained 4-class network on a synthesized frame of the observed class."""

    kind = "model"

    def __init__(self, model, max_snr_db: float = 18.0):
        self.model = model
        self.max_snr_db = max_snr_db

    def accuracy(self, snr_db):
        return OVERALL_ACCURACY

    def scores(self, obs, rng):
        from rfdsa.nnet.model import predict_scores

        kinds = kinds_of_class(obs.truth)
        kind = kinds[rng.integers(len(kinds))]
        snr = min(obs.snr_db, self.max_snr_db)
        frame = synth_frame(kind, snr, rng)
        return predict_scores(self.model, frame.samples[None])[0]


def make_classifier(kind: str, model=None) -> SignalClassifier:
    if kind == "ideal":
        return IdealClassifier()
    if kind == "random":
        return RandomClassifier()
    if kind == "table-all":
        return TableClassifier(per_snr=False)
    if kind == "table-per-snr":
        return TableClassifier(per_snr=True)
    if kind == "model":
        if model is None:
            raise ValueError("the model classifier needs a trained network")
        return ModelClassifier(model)
    raise ValueError(f"unknown classifier {kind!r}; expected one of {CLASSIFIER_KINDS}")


def sense_channel(node: int, topo: Topology, emitters: dict[int, SignalClass],
                  classifier: SignalClassifier, sinr: SinrConfig, rng: np.random.Generator,
                  outliers: bool = False, superposition: bool = False) -> ChannelStatus:
    """Sense at ``node`` and classify.

    With ``outliers`` jammers use modulations the classifier never saw and
    every non-idle observation goes through the outlier detector: flagged signals are
    treated as jamming, missed ones get a random known label, and known signals
    are falsely flagged at the detector's error rate. With ``superposition`` the
    two strongest sources are separated and both classified; the status is the
    more restrictive of the pair.
    """
    obs = observe(topo, sinr, node, emitters)
    status = classifier.status(obs, rng)
    if isinstance(classifier, RandomClassifier):
        return status
    ideal = isinstance(classifier, IdealClassifier)

    if superposition and obs.second is not None:
        pair = [obs.truth, obs.second]
        if not ideal:
            acc = table_row(TABLE_SUPERPOSED, min(obs.snr_db, obs.second_snr_db))
            pair = [_confuse(c, acc, rng) for c in pair]
            conf = acc
        else:
            conf = 1.0
        worst = SignalClass.OUT_NETWORK if SignalClass.OUT_NETWORK in pair else max(pair)
        status = ChannelStatus(worst, conf, _table_scores(worst, conf))

    if outliers and not ideal and obs.truth is not SignalClass.IDLE:
        acc = table_row(TABLE_OUTLIER, obs.snr_db)
        if obs.truth is SignalClass.JAMMER:
            if rng.random() < acc:
                status = ChannelStatus(SignalClass.JAMMER, acc, _table_scores(SignalClass.JAMMER, acc))
            else:
                known = [SignalClass.IDLE, SignalClass.IN_NETWORK, SignalClass.OUT_NETWORK]
                c = known[rng.integers(3)]
                status = ChannelStatus(c, acc, _table_scores(c, acc))
        elif rng.random() >= acc:
            status = ChannelStatus(SignalClass.JAMMER, acc, _table_scores(SignalClass.JAMMER, acc))
    return status
