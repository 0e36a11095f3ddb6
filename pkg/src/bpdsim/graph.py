"""Directed weighted graphs with exact rational edge weights.

Weights are `fractions.Fraction` throughout so path costs compare exactly;
protocol distance tables and the Dijkstra reference below must agree to the
bit, not to a float tolerance.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

NodeId = str
Edge = tuple[NodeId, NodeId]


@dataclass
class DirectedGraph:
    """Simple digraph: no self-loops, at most one edge per ordered pair."""

    nodes: tuple[NodeId, ...]
    edges: dict[Edge, Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.nodes = tuple(sorted(set(self.nodes)))
        known = set(self.nodes)
        for (u, v), w in self.edges.items():
            if u == v:
                raise ValueError(f"self-loop on {u!r}")
            if u not in known or v not in known:
                raise ValueError(f"edge ({u!r}, {v!r}) references unknown node")
            if w <= 0:
                raise ValueError(f"edge ({u!r}, {v!r}) has non-positive weight {w}")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def out_edges(self, u: NodeId) -> list[tuple[NodeId, Fraction]]:
        return sorted((v, w) for (a, v), w in self.edges.items() if a == u)

    def in_edges(self, v: NodeId) -> list[tuple[NodeId, Fraction]]:
        return sorted((u, w) for (u, b), w in self.edges.items() if b == v)

    def out_degree(self, u: NodeId) -> int:
        return sum(1 for (a, _v) in self.edges if a == u)

    def in_degree(self, v: NodeId) -> int:
        return sum(1 for (_u, b) in self.edges if b == v)

    def max_weight(self) -> Fraction:
        if not self.edges:
            return Fraction(0)
        return max(self.edges.values())


def dijkstra(graph: DirectedGraph, src: NodeId) -> dict[NodeId, Fraction]:
    """Exact single-source shortest path costs; unreachable nodes are absent.

    The result includes ``src`` itself with cost 0.
    """
    if src not in graph.nodes:
        raise KeyError(src)
    adj: dict[NodeId, list[tuple[NodeId, Fraction]]] = {n: [] for n in graph.nodes}
    for (u, v), w in graph.edges.items():
        adj[u].append((v, w))
    for lst in adj.values():
        lst.sort()
    dist: dict[NodeId, Fraction] = {src: Fraction(0)}
    done: set[NodeId] = set()
    heap: list[tuple[Fraction, NodeId]] = [(Fraction(0), src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in adj[u]:
            nd = d + w
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def all_pairs_costs(graph: DirectedGraph) -> dict[NodeId, dict[NodeId, Fraction]]:
    return {n: dijkstra(graph, n) for n in graph.nodes}


def hop_counts(graph: DirectedGraph, src: NodeId) -> dict[NodeId, int]:
    """Unweighted BFS hop distances from src (src -> 0)."""
    if src not in graph.nodes:
        raise KeyError(src)
    succ: dict[NodeId, list[NodeId]] = {n: [] for n in graph.nodes}
    for u, v in graph.edges:
        succ[u].append(v)
    for lst in succ.values():
        lst.sort()
    hops = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        for v in succ[u]:
            if v not in hops:
                hops[v] = hops[u] + 1
                q.append(v)
    return hops


def is_strongly_connected(graph: DirectedGraph) -> bool:
    """True iff every node reaches every other (single node counts)."""
    if graph.n_nodes <= 1:
        return True
    first = graph.nodes[0]
    if len(hop_counts(graph, first)) != graph.n_nodes:
        return False
    reverse = DirectedGraph(graph.nodes, {(v, u): w for (u, v), w in graph.edges.items()})
    return len(hop_counts(reverse, first)) == graph.n_nodes


def subgraph(graph: DirectedGraph, keep: set[NodeId]) -> DirectedGraph:
    nodes = tuple(n for n in graph.nodes if n in keep)
    edges = {(u, v): w for (u, v), w in graph.edges.items() if u in keep and v in keep}
    return DirectedGraph(nodes, edges)
