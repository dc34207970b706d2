"""Distributed slot scheduling driven by channel classification.

Each active link runs three synchronous phases: the transmitter broadcasts a
request (type, priorities) built from its receiver's channel status, every
receiver answers with a per-slot approval, and a transmitter goes on the air in
slot ``t`` only when its own receiver approves and no other response it hears
names a different transmitter for ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from rfdsa.dsa.classifiers import ChannelStatus
from rfdsa.dsa.topology import Topology
from rfdsa.seeding import substream
from rfdsa.sigsynth import SignalClass


@dataclass(frozen=True)
class Request:
    sender: int
    type: int
    priorities: np.ndarray

    def __post_init__(self):
        if self.type not in (0, 1, 2):
            raise ValueError("request type must be idle, in-network or jammer")


@dataclass(frozen=True)
class Response:
    receiver: int
    transmitter: int
    approved: tuple

    def names(self, t: int) -> Optional[int]:
        """Transmitter granted slot ``t`` by this response, if any."""
        return self.transmitter if self.approved[t] else None


def priorities(score: float, node: int, frame_index: int, T: int, seed: int) -> np.ndarray:
    """``score * u_t`` with ``u_t`` uniform on (0, 1] from the (seed, node, frame) stream."""
    u = 1.0 - substream(seed, "priority", node, frame_index).random(T)
    return score * u


def make_request(status: Optional[ChannelStatus], node: int, frame_index: int, T: int,
                 seed: int) -> Optional[Request]:
    if status is None or status.cls is SignalClass.OUT_NETWORK:
        return None
    return Request(node, int(status.cls), priorities(status.score, node, frame_index, T, seed))


def make_response(receiver: int, heard: Sequence[Request], own: Request, T: int) -> Response:
    """Approve the slots this receiver's transmitter wins.

    A strictly better (lower) type than every other heard request wins all
    slots; a worse type than some request wins none; otherwise slot ``t`` goes
    to the largest priority among equal-type requests, ties to the smaller id.
    """
    others = [r for r in heard if r.sender != own.sender]
    if not others:
        return Response(receiver, own.sender, (True,) * T)
    best_other = min(r.type for r in others)
    if own.type < best_other:
        return Response(receiver, own.sender, (True,) * T)
    if own.type > best_other:
        return Response(receiver, own.sender, (False,) * T)
    tied = [r for r in others if r.type == own.type]
    approved = []
    for t in range(T):
        mine = (own.priorities[t], -own.sender)
        approved.append(all(mine > (r.priorities[t], -r.sender) for r in tied))
    return Response(receiver, own.sender, tuple(approved))


def resolve_transmission(transmitter: int, own: Optional[Response], heard: Iterable[Response], t: int) -> bool:
    if own is None or not own.approved[t]:
        return False
    for r in heard:
        if r.receiver == own.receiver:
            continue
        named = r.names(t)
        if named is not None and named != transmitter:
            return False
    return True


@dataclass
class Schedule:
    slots: list[list[int]]
    requests: dict[int, Request]
    responses: dict[int, Response]


def run_protocol(topo: Topology, links: Sequence[int], rx_status: dict[int, Optional[ChannelStatus]],
                 tx_status: dict[int, Optional[ChannelStatus]], frame_index: int, T: int,
                 seed: int) -> Schedule:
    """One scheduling period for the active ``links`` (transmitter ids).

    ``rx_status[tx]`` is the status sensed by the receiver of link ``tx`` and
    ``tx_status[tx]`` the one sensed by the transmitter itself; either one
    reporting OutNetwork suppresses the request.
    """
    requests: dict[int, Request] = {}
    for tx in links:
        rs, ts = rx_status.get(tx), tx_status.get(tx)
        if ts is not None and ts.cls is SignalClass.OUT_NETWORK:
            continue
        req = make_request(rs, tx, frame_index, T, seed)
        if req is not None:
            requests[tx] = req

    responses: dict[int, Response] = {}
    for tx, req in requests.items():
        rx = int(topo.links[tx])
        heard = [r for s, r in requests.items() if s != tx and topo.dist[s, rx] <= topo.radius]
        responses[tx] = make_response(rx, heard, req, T)

    slots = [[] for _ in range(T)]
    for tx, own in responses.items():
        heard = [r for s, r in responses.items() if s != tx and topo.dist[tx, r.receiver] <= topo.radius]
        for t in range(T):
            if resolve_transmission(tx, own, heard, t):
                slots[t].append(tx)
    return Schedule(slots, requests, responses)
