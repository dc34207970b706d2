"""SINR success model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from rfdsa.dsa.topology import Topology


@dataclass(frozen=True)
class SinrConfig:
    """Path-loss channel. The default noise floor puts a 10 m link at 10 dB SNR."""

    power: float = 1.0
    alpha: float = 2.0
    noise: float = 1e-3
    beta_db: float = 3.0
    beta_jam_db: float = 0.0
    min_dist: float = 1.0
    jam_rate: float = 1.0

    def __post_init__(self):
        if self.power <= 0:
            raise ValueError("power must be positive")
        if self.alpha < 2:
            raise ValueError("path-loss exponent must be >= 2")
        if self.beta_db < self.beta_jam_db:
            raise ValueError("beta must be >= beta_jam")
        if self.noise <= 0 or self.min_dist <= 0:
            raise ValueError("noise and min_dist must be positive")

    def gain(self, d) -> np.ndarray:
        return self.power * np.maximum(np.asarray(d, dtype=float), self.min_dist) ** (-self.alpha)


def db(x) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def sinr_db(topo: Topology, sinr: SinrConfig, tx: int, rx: int, interferers: Iterable[int]) -> float:
    others = [i for i in interferers if i != tx]
    signal = sinr.gain(topo.dist[tx, rx])
    interference = float(sinr.gain(topo.dist[others, rx]).sum()) if others else 0.0
    return float(db(signal / (sinr.noise + interference)))


def evaluate_slot(topo: Topology, sinr: SinrConfig, transmitters: Sequence[int],
                  emitters: Sequence[int] = (), adapted: Sequence[bool] | None = None) -> dict[int, bool]:
    """Per-link success for one slot.

    ``transmitters`` are in-network transmitter ids (receiver ``topo.links[i]``);
    ``emitters`` are other active sources (jammers, out-network users) that
    only add interference. A link adapted to a jammer needs ``beta_jam_db``.
    """
    adapted = [False] * len(transmitters) if adapted is None else list(adapted)
    sources = list(transmitters) + list(emitters)
    out = {}
    for tx, adapt in zip(transmitters, adapted):
        s = sinr_db(topo, sinr, tx, topo.links[tx], sources)
        out[tx] = s >= (sinr.beta_jam_db if adapt else sinr.beta_db)
    return out


def outnet_blocked(topo: Topology, user: int, transmitters: Sequence[int]) -> bool:
    """An out-network slot fails when an in-network transmitter within range is on the air."""
    if len(transmitters) == 0:
        return False
    return bool(np.any(topo.dist[user, list(transmitters)] <= topo.radius))
