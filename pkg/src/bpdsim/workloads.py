"""Distributed averaging workload and the peer-selection strategies under test.

Every strategy runs the same iteration: each round a node mixes the values
delivered to it toward their average, weighting each delivered neighbour
``eps / k`` where k is the number of distinct senders heard this round. The
strategies differ only in who talks to whom: direct all-to-all, random push
gossip, the declared topology as-is, or the declared topology managed by the
bounded-path protocol.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from .graph import NodeId

DEFAULT_EPS = 0.5


class TooFewPeersError(ValueError):
    pass


@dataclass(frozen=True)
class AllToAll:
    name: str = "all-to-all"


@dataclass(frozen=True)
class Gossip:
    fanout: int = 3
    name: str = "gossip"


@dataclass(frozen=True)
class Unmodified:
    name: str = "unmodified"


@dataclass(frozen=True)
class Bpd:
    name: str = "bpd"


Strategy = AllToAll | Gossip | Unmodified | Bpd

_NAMES = {"all-to-all": AllToAll, "alltoall": AllToAll, "gossip": Gossip,
          "unmodified": Unmodified, "bpd": Bpd}


def parse_strategy(name: str, fanout: int = 3) -> Strategy:
    cls = _NAMES.get(name.strip().lower())
    if cls is None:
        raise ValueError(f"unknown strategy {name!r}")
    return Gossip(fanout) if cls is Gossip else cls()


def init_values(roster: list[NodeId], seed: int) -> dict[NodeId, float]:
    """Per-node initial readings, uniform over [0, 100), seeded."""
    rng = random.Random(f"{seed}:init")
    return {n: rng.uniform(0.0, 100.0) for n in sorted(roster)}


def true_average(values: dict[NodeId, float]) -> float:
    if not values:
        raise ValueError("no values")
    return sum(values.values()) / len(values)


def consensus_step(x_i: float, delivered: dict[NodeId, float], eps: float = DEFAULT_EPS) -> float:
    """One averaging update; a node that heard nobody keeps its value."""
    k = len(delivered)
    if k == 0:
        return x_i
    a = eps / k
    return x_i + a * sum(x_j - x_i for x_j in delivered.values())


def select_gossip_peers(
    node: NodeId, alive: set[NodeId], fanout: int, rng: random.Random
) -> list[NodeId]:
    """Uniform sample of fanout distinct alive peers (never the node itself)."""
    pool = sorted(alive - {node})
    if fanout > len(pool):
        raise TooFewPeersError(f"fanout {fanout} > {len(pool)} available peers")
    return sorted(rng.sample(pool, fanout))


def strategy_emit(strategy: Strategy, node: NodeId, world) -> list[NodeId]:
    """Destinations for this node's application message this round.

    Group-based strategies enumerate current group receivers, so peers that
    died but are not yet detected still get (dropped) messages, as on a real
    deployment.
    """
    if isinstance(strategy, AllToAll):
        return sorted(world.detected_alive - {node})
    if isinstance(strategy, Gossip):
        return select_gossip_peers(node, world.detected_alive, strategy.fanout, world.gossip_rng)
    dsts: list[NodeId] = []
    for g in world.assignment.send_groups(node):
        for r in sorted(g.receivers):
            if r != node:
                dsts.append(r)
    return dsts
