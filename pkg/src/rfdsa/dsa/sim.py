"""Superframe simulator for distributed scheduling and the two TDMA benchmarks.

Throughput is counted in packets. A distributed data slot carries one packet.
The benchmarks split the same data period into ``K`` shorter slots (``K`` =
100 for scheme 1, the number of colors for scheme 2), so a success there is
worth ``T / K`` packets; raw slot successes are kept alongside.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from rfdsa.dsa.channel import SinrConfig, evaluate_slot, outnet_blocked
from rfdsa.dsa.classifiers import ChannelStatus, SignalClassifier, make_classifier, sense_channel
from rfdsa.dsa.protocol import run_protocol
from rfdsa.dsa.topology import (
    Topology, TopologyConfig, build_interference_graph, generate_topology, greedy_coloring, max_degree,
)
from rfdsa.seeding import substream
from rfdsa.sigsynth import SignalClass
from rfdsa.traffic import FusionInput, MarkovProfile, deep_state, fuse, predict, resolve_class


@dataclass(frozen=True)
class SuperframeConfig:
    slots: int = 10
    superframes: int = 1000
    active_links: int = 10

    def __post_init__(self):
        if self.slots < 1:
            raise ValueError("a superframe needs at least one data slot")
        if self.superframes < 0 or self.active_links < 0:
            raise ValueError("counts must be non-negative")


@dataclass(frozen=True)
class Options:
    jamming: bool = True
    traffic_fusion: bool = False
    fusion_weight: float = 0.2
    outliers: bool = False
    superposition: bool = False
    activity: str = "iid"      # "iid" or "markov"
    p_active: float = 0.5
    p_stay: float = 0.8

    def __post_init__(self):
        if self.activity not in ("iid", "markov"):
            raise ValueError("activity must be 'iid' or 'markov'")
        if not 0.0 <= self.fusion_weight <= 1.0:
            raise ValueError("fusion weight must lie in [0, 1]")


@dataclass
class Metrics:
    throughput: float = 0.0
    successes: int = 0
    outnet_attempts: int = 0
    outnet_successes: int = 0
    slots_per_superframe: int = 0
    per_superframe: list = field(default_factory=list)
    max_concurrent_conflicts: int = 0

    @property
    def outnet_success_pct(self) -> float:
        if self.outnet_attempts == 0:
            return 100.0
        return 100.0 * self.outnet_successes / self.outnet_attempts

    def key(self) -> tuple:
        return (self.throughput, self.successes, self.outnet_attempts, self.outnet_successes,
                self.slots_per_superframe, tuple(self.per_superframe))


# --- scenario sampling --------------------------------------------------------

def activity_trace(n_sources: int, n_frames: int, options: Options, rng: np.random.Generator) -> np.ndarray:
    """Per-superframe on/off state of each jammer or out-network user."""
    if options.activity == "iid":
        return rng.random((n_frames, n_sources)) < options.p_active
    state = np.zeros((n_frames, n_sources), dtype=bool)
    if n_frames == 0:
        return state
    state[0] = rng.random(n_sources) < 0.5
    for f in range(1, n_frames):
        stay = rng.random(n_sources) < options.p_stay
        state[f] = np.where(stay, state[f - 1], ~state[f - 1])
    return state


def sample_links(topo: Topology, k: int, rng: np.random.Generator) -> list[int]:
    """Up to ``k`` links (by transmitter) with pairwise distinct endpoints."""
    chosen, used = [], set()
    if k == 0:
        return chosen
    for tx in rng.permutation(topo.n_in):
        rx = int(topo.links[tx])
        if tx in used or rx in used:
            continue
        chosen.append(int(tx))
        used.update((int(tx), rx))
        if len(chosen) == k:
            break
    return chosen


@dataclass
class Scenario:
    links: list
    jam_on: np.ndarray
    out_on: np.ndarray


def make_scenario(topo: Topology, frames: SuperframeConfig, options: Options, seed: int) -> Scenario:
    lrng = substream(seed, "links")
    links = [sample_links(topo, frames.active_links, lrng) for _ in range(frames.superframes)]
    jam = activity_trace(topo.n_jam, frames.superframes, options, substream(seed, "activity", "jammer"))
    out = activity_trace(topo.n_out, frames.superframes, options, substream(seed, "activity", "out-network"))
    if not options.jamming:
        jam = np.zeros_like(jam)
    return Scenario(links, jam, out)


def _active(ids: np.ndarray, mask: np.ndarray) -> list[int]:
    return [int(i) for i, on in zip(ids, mask) if on]


# --- distributed scheduling -----------------------------------------------------

class _FusionState:
    def __init__(self, weight: float):
        self.weight = weight
        self.profiles: dict[int, MarkovProfile] = {}

    def apply(self, node: int, status: ChannelStatus) -> ChannelStatus:
        prof = self.profiles.setdefault(node, MarkovProfile())
        scores = status.scores if status.scores is not None else _onehot(status)
        s_d, c_d = deep_state(scores)
        if prof.last_state is None:
            state = s_d
        else:
            s_t, c_t = predict(prof, prof.last_state)
            state, _ = fuse(FusionInput(s_t, c_t, s_d, c_d, self.weight))
        prof.observe(state)
        cls, score = resolve_class(state, scores)
        return ChannelStatus(cls, float(np.clip(score, 0.0, 1.0)), scores)


def _onehot(status: ChannelStatus) -> np.ndarray:
    s = np.zeros(4)
    s[int(status.cls)] = status.score
    return s


def run_simulation(topo: Topology, frames: SuperframeConfig = SuperframeConfig(),
                   classifier: SignalClassifier | str = "ideal", options: Options = Options(),
                   seed: int = 0, sinr: SinrConfig = SinrConfig(), scenario: Optional[Scenario] = None,
                   check_conflicts: bool = False) -> Metrics:
    """Distributed scheduling over ``frames.superframes`` superframes.

    With ``check_conflicts`` the number of same-slot transmitter pairs that
    conflict in the interference graph is tracked (it should stay zero).
    """
    if isinstance(classifier, str):
        classifier = make_classifier(classifier)
    scenario = scenario or make_scenario(topo, frames, options, seed)
    fusion = _FusionState(options.fusion_weight) if options.traffic_fusion else None
    graph = build_interference_graph(topo) if check_conflicts else None
    m = Metrics(slots_per_superframe=frames.slots)
    T = frames.slots
    for f in range(frames.superframes):
        links = scenario.links[f]
        jammers = _active(topo.jam_ids, scenario.jam_on[f])
        outs = _active(topo.out_ids, scenario.out_on[f])
        rng = substream(seed, "sense", f)
        external = {j: SignalClass.JAMMER for j in jammers}
        external.update({o: SignalClass.OUT_NETWORK for o in outs})

        rx_status, tx_status = {}, {}
        for tx in links:
            emitters = dict(external)
            emitters.update({o: SignalClass.IN_NETWORK for o in links if o != tx})
            for node, store in ((int(topo.links[tx]), rx_status), (tx, tx_status)):
                st = sense_channel(node, topo, emitters, classifier, sinr, rng,
                                   options.outliers, options.superposition)
                if fusion is not None:
                    st = fusion.apply(node, st)
                store[tx] = st

        sched = run_protocol(topo, links, rx_status, tx_status, f, T, seed)
        gained = 0.0
        for t in range(T):
            on_air = sched.slots[t]
            if graph is not None:
                m.max_concurrent_conflicts += sum(
                    1 for i, a in enumerate(on_air) for b in on_air[i + 1:] if b in graph[a])
            adapted = [rx_status[tx].cls is SignalClass.JAMMER for tx in on_air]
            ok = evaluate_slot(topo, sinr, on_air, jammers + outs, adapted)
            for tx, a in zip(on_air, adapted):
                if ok[tx]:
                    m.successes += 1
                    gained += sinr.jam_rate if a else 1.0
            for u in outs:
                m.outnet_attempts += 1
                m.outnet_successes += not outnet_blocked(topo, u, on_air)
        m.throughput += gained
        m.per_superframe.append(gained)
    return m


# --- centralized benchmarks -------------------------------------------------------

def _benchmark(topo: Topology, frames: SuperframeConfig, scenario: Scenario, sinr: SinrConfig,
               slot_of: dict[int, int], n_slots: int) -> Metrics:
    T = frames.slots
    credit = T / n_slots
    m = Metrics(slots_per_superframe=n_slots)
    for f in range(frames.superframes):
        links = scenario.links[f]
        external = _active(topo.jam_ids, scenario.jam_on[f]) + _active(topo.out_ids, scenario.out_on[f])
        outs = _active(topo.out_ids, scenario.out_on[f])
        groups: dict[int, list[int]] = {}
        for tx in links:
            groups.setdefault(slot_of[tx], []).append(tx)
        gained = 0.0
        for k, on_air in groups.items():
            ok = evaluate_slot(topo, sinr, on_air, external)
            n_ok = sum(ok.values())
            m.successes += n_ok
            gained += n_ok * credit
        for u in outs:
            for t in range(T):
                m.outnet_attempts += 1
                # mini-slots whose time window overlaps data slot t
                busy = [tx for k, on_air in groups.items()
                        if k * T < (t + 1) * n_slots and (k + 1) * T > t * n_slots for tx in on_air]
                m.outnet_successes += not outnet_blocked(topo, u, busy)
        m.throughput += gained
        m.per_superframe.append(gained)
    return m


def benchmark_scheme_1(topo: Topology, frames: SuperframeConfig = SuperframeConfig(),
                       options: Options = Options(), seed: int = 0, sinr: SinrConfig = SinrConfig(),
                       scenario: Optional[Scenario] = None) -> Metrics:
    """One dedicated slot per in-network transmitter (``n_in`` slots)."""
    scenario = scenario or make_scenario(topo, frames, options, seed)
    slot_of = {int(i): int(i) for i in topo.in_ids}
    return _benchmark(topo, frames, scenario, sinr, slot_of, topo.n_in)


def benchmark_scheme_2(topo: Topology, frames: SuperframeConfig = SuperframeConfig(),
                       options: Options = Options(), seed: int = 0, sinr: SinrConfig = SinrConfig(),
                       scenario: Optional[Scenario] = None) -> tuple[Metrics, int]:
    """Interference-free TDMA over ``D + 1`` slots; returns the metrics and ``D``.

    ``D`` is the maximum degree of the interference graph. Links take the slot
    of their greedy color, which never exceeds ``D``; the frame is always
    ``D + 1`` slots long, the size that guarantees a conflict-free schedule.
    """
    scenario = scenario or make_scenario(topo, frames, options, seed)
    graph = build_interference_graph(topo)
    color = greedy_coloring(graph)
    degree = max_degree(graph)
    return _benchmark(topo, frames, scenario, sinr, color, degree + 1), degree


# --- config and output --------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    topology: TopologyConfig = TopologyConfig()
    frames: SuperframeConfig = SuperframeConfig()
    sinr: SinrConfig = SinrConfig()
    options: Options = Options()


_SECTIONS = ("topology", "frames", "sinr", "options")


def _coerce(value: str, current):
    if isinstance(current, bool):
        v = value.strip().lower()
        if v in ("1", "true", "on", "yes"):
            return True
        if v in ("0", "false", "off", "no"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value.strip()


def apply_overrides(cfg: ScenarioConfig, pairs: dict[str, str]) -> ScenarioConfig:
    """Apply flat ``key=value`` overrides; keys are field names of any section."""
    parts = {name: getattr(cfg, name) for name in _SECTIONS}
    for key, value in pairs.items():
        for name in _SECTIONS:
            section = parts[name]
            if key in {f.name for f in dataclasses.fields(section)}:
                parts[name] = dataclasses.replace(section, **{key: _coerce(value, getattr(section, key))})
                break
        else:
            raise KeyError(f"unknown scenario key {key!r}")
    return ScenarioConfig(**parts)


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def config_items(cfg: ScenarioConfig) -> dict[str, object]:
    flat = {}
    for name in _SECTIONS:
        flat.update(dataclasses.asdict(getattr(cfg, name)))
    return flat


METRICS_FIELDS = ["scenario", "classifier", "jamming", "traffic_fusion", "outliers", "superposition",
                  "seed", "throughput_packets", "outnet_success_pct"]


def metrics_row(scenario: str, classifier: str, options: Options, seed: int, m: Metrics) -> dict:
    return {"scenario": scenario, "classifier": classifier, "jamming": int(options.jamming),
            "traffic_fusion": int(options.traffic_fusion), "outliers": int(options.outliers),
            "superposition": int(options.superposition), "seed": seed,
            "throughput_packets": round(m.throughput, 6), "outnet_success_pct": round(m.outnet_success_pct, 4)}


def write_metrics_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRICS_FIELDS)
        w.writeheader()
        w.writerows(rows)
