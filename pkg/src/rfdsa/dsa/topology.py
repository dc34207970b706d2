"""Node placement, in-network links and the link interference graph."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from rfdsa.seeding import substream

ROLE_IN = "in-network"
ROLE_OUT = "out-network"
ROLE_JAM = "jammer"


class InfeasiblePlacement(RuntimeError):
    pass


@dataclass(frozen=True)
class TopologyConfig:
    n_in: int = 100
    n_out: int = 2
    n_jam: int = 2
    side: float = 50.0
    radius: float = 10.0
    max_resamples: int = 10_000

    def __post_init__(self):
        if self.n_in < 2:
            raise ValueError("need at least two in-network nodes")
        if self.n_out < 0 or self.n_jam < 0:
            raise ValueError("node counts must be non-negative")
        if self.side <= 0 or self.radius <= 0:
            raise ValueError("side and radius must be positive")


@dataclass(frozen=True)
class Topology:
    """Node ``i`` has position ``pos[i]``.

    In-network nodes are ``0 .. n_in-1``, then out-network users, then
    jammers. ``links[i]`` is the receiver of in-network transmitter ``i``.
    """

    pos: np.ndarray
    n_in: int
    n_out: int
    n_jam: int
    links: np.ndarray
    radius: float
    side: float
    dist: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.dist is None:
            diff = self.pos[:, None, :] - self.pos[None, :, :]
            object.__setattr__(self, "dist", np.sqrt((diff ** 2).sum(axis=-1)))

    @property
    def n_nodes(self) -> int:
        return len(self.pos)

    @property
    def in_ids(self) -> np.ndarray:
        return np.arange(self.n_in)

    @property
    def out_ids(self) -> np.ndarray:
        return np.arange(self.n_in, self.n_in + self.n_out)

    @property
    def jam_ids(self) -> np.ndarray:
        return np.arange(self.n_in + self.n_out, self.n_nodes)

    def role(self, node: int) -> str:
        if node < self.n_in:
            return ROLE_IN
        if node < self.n_in + self.n_out:
            return ROLE_OUT
        return ROLE_JAM

    def neighbors(self, node: int) -> np.ndarray:
        """In-network nodes within range of ``node`` (itself excluded)."""
        d = self.dist[node, :self.n_in]
        ids = np.flatnonzero(d <= self.radius)
        return ids[ids != node]


def generate_topology(config: TopologyConfig = TopologyConfig(), seed: int = 0) -> Topology:
    """Uniform placement; every in-network node gets a receiver within range.

    The whole layout is redrawn when some node has no in-network neighbour.
    """
    rng = substream(seed, "topology")
    n = config.n_in + config.n_out + config.n_jam
    for _ in range(config.max_resamples):
        pos = rng.uniform(0.0, config.side, size=(n, 2))
        diff = pos[:config.n_in, None, :] - pos[None, :config.n_in, :]
        d = np.sqrt((diff ** 2).sum(axis=-1))
        close = (d <= config.radius) & ~np.eye(config.n_in, dtype=bool)
        if not close.any(axis=1).all():
            continue
        links = np.array([rng.choice(np.flatnonzero(row)) for row in close])
        return Topology(pos, config.n_in, config.n_out, config.n_jam, links, config.radius, config.side)
    raise InfeasiblePlacement(f"no feasible layout after {config.max_resamples} draws")


def dump_topology_csv(topo: Topology, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "role", "x", "y"])
        for i, (x, y) in enumerate(topo.pos):
            w.writerow([i, topo.role(i), float(x), float(y)])


def conflicts(topo: Topology, a: int, b: int) -> bool:
    """Links (by transmitter id) interfere when either transmitter is in range of the other receiver."""
    if a == b:
        return False
    ra, rb = topo.links[a], topo.links[b]
    if len({a, ra} & {b, rb}):
        return True
    return bool(topo.dist[a, rb] <= topo.radius or topo.dist[b, ra] <= topo.radius)


def build_interference_graph(topo: Topology, links=None) -> dict[int, set[int]]:
    """Adjacency sets over links, each identified by its transmitter id."""
    links = list(topo.in_ids if links is None else links)
    graph = {a: set() for a in links}
    for i, a in enumerate(links):
        for b in links[i + 1:]:
            if conflicts(topo, a, b):
                graph[a].add(b)
                graph[b].add(a)
    return graph


def max_degree(graph: dict) -> int:
    return max((len(v) for v in graph.values()), default=0)


def greedy_coloring(graph: dict) -> dict[int, int]:
    """Largest-degree-first greedy coloring; uses at most D+1 colors."""
    order = sorted(graph, key=lambda v: (-len(graph[v]), v))
    color: dict[int, int] = {}
    for v in order:
        used = {color[u] for u in graph[v] if u in color}
        c = 0
        while c in used:
            c += 1
        color[v] = c
    return color
