"""Shared fixtures: oracle implementations and frozen random corpora.

The brute-force oracle enumerates simple paths, so it is exponential and
only used on small graphs; it exists to validate the Dijkstra oracle,
which in turn checks the protocol. Corpus generators are seeded with
stable strings so every test run sees identical graphs.
"""
import random
from fractions import Fraction

import pytest

from bpdsim.graph import DirectedGraph

# the ten-link base used across measurement tests: two-cycle {a,b} and
# cycle {d,e,f} joined only through c; worst directed distance d->b = 5
BASE10_EDGES = (
    ("a", "b"),
    ("a", "c"),
    ("b", "a"),
    ("c", "a"),
    ("c", "f"),
    ("d", "e"),
    ("e", "f"),
    ("f", "c"),
    ("f", "d"),
    ("f", "e"),
)


def make_graph(edges, weights=None):
    nodes = tuple(sorted({n for e in edges for n in e}))
    wmap = {}
    for i, e in enumerate(edges):
        w = 1 if weights is None else weights[i]
        wmap[e] = Fraction(w)
    return DirectedGraph(nodes=nodes, edges=wmap)


@pytest.fixture
def base10():
    return make_graph(BASE10_EDGES)


def brute_force_costs(graph, src):
    """Exact shortest directed path costs by simple-path enumeration."""
    best = {src: Fraction(0)}

    def walk(u, cost, seen):
        for v, w in graph.out_edges(u):
            if v in seen:
                continue
            nxt = cost + w
            if v not in best or nxt < best[v]:
                best[v] = nxt
            walk(v, nxt, seen | {v})

    walk(src, Fraction(0), {src})
    return best


def random_sc_digraph(n, seed, weights=(1, 2), extra_p=0.25):
    """Strongly connected by construction: hidden Hamiltonian cycle plus
    random extra edges."""
    rng = random.Random(f"corpus:{n}:{seed}")
    nodes = [f"n{i}" for i in range(n)]
    order = nodes[:]
    rng.shuffle(order)
    edges = {}
    for i, u in enumerate(order):
        edges[(u, order[(i + 1) % n])] = Fraction(rng.choice(weights))
    for u in nodes:
        for v in nodes:
            if u != v and (u, v) not in edges and rng.random() < extra_p:
                edges[(u, v)] = Fraction(rng.choice(weights))
    return DirectedGraph(nodes=tuple(nodes), edges=edges)


def corpus_graph(i):
    """Graph i of the frozen 100-graph mixed-weight corpus (N in 4..12)."""
    return random_sc_digraph(4 + i % 9, 1000 + i)


# designated error class and line for every invalid topology file
INVALID_TL = {
    "bad_rational.tl": ("TopLinkSyntaxError", 4),
    "custom_nolinks.tl": ("PresetMismatchError", 1),
    "duplicate_link.tl": ("DuplicateLinkError", 6),
    "duplicate_peer.tl": ("DuplicatePeerError", 2),
    "fanout_too_big.tl": ("InvalidFanoutError", 1),
    "fanout_zero.tl": ("InvalidFanoutError", 1),
    "missing_nodes.tl": ("TopLinkSyntaxError", 3),
    "missing_semicolon.tl": ("TopLinkSyntaxError", 2),
    "preset_links.tl": ("PresetMismatchError", 3),
    "self_link.tl": ("SelfLinkError", 5),
    "unknown_keyword.tl": ("UnknownKeywordError", 2),
    "unknown_peer.tl": ("UnknownPeerError", 5),
    "zero_rational_weight.tl": ("NonPositiveWeightError", 5),
    "zero_weight.tl": ("NonPositiveWeightError", 4),
}
