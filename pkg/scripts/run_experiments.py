#!/usr/bin/env python3
"""Desk-scale measurement sweep over the four dissemination strategies.

Prints three tables for the canned 6-node/10-edge base topology:

  1. steady-state traffic and consensus quality per strategy (seed-averaged)
  2. mean dissemination efficiency after one and two mid-run crashes
  3. repair-delay distribution over a batch of random crash scenarios

Run from the repository root:

    python3 scripts/run_experiments.py [--seeds 20] [--rounds 300]
"""
import argparse
import random
import statistics
import sys
from fractions import Fraction
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parents[1] / "src"))

from bpdsim import metrics
from bpdsim.bpd import BpdConfig, default_threshold
from bpdsim.graph import DirectedGraph, all_pairs_costs, is_strongly_connected
from bpdsim.simnet import FaultEvent, SimConfig, World
from bpdsim.toplink import build_graph, parse_toplink_file
from bpdsim.workloads import AllToAll, Bpd, Gossip, Unmodified, true_average

BASE_TL = Path(__file__).parents[1] / "scenarios" / "base10.tl"

STRATEGIES = [
    ("all-to-all", AllToAll(), None),
    ("gossip(3)", Gossip(3), None),
    ("unmodified", Unmodified(), None),
    ("bpd", Bpd(), BpdConfig(thresh=3, repair_period_rounds=50)),
]


def run_world(graph, strategy, bpd_cfg, seed, rounds, faults=()):
    cfg = SimConfig(n_rounds=rounds, seed=seed)
    w = World(graph, strategy, cfg, bpd_cfg=bpd_cfg, faults=list(faults))
    w.run()
    return w


def strategy_table(graph, seeds, rounds):
    print(f"strategy comparison, {seeds} seeds x {rounds} rounds")
    print(f"{'strategy':<12} {'msgs/rd':>8} {'kB/s/node':>10} {'dev %':>8} {'to-band':>8}")
    for name, strategy, bpd_cfg in STRATEGIES:
        msgs, kbps, devs, bands = [], [], [], []
        for seed in range(seeds):
            w = run_world(graph, strategy, bpd_cfg, seed, rounds)
            opt = true_average(w.x0)
            msgs.append(w.stats[-1].messages)
            kbps.append(
                metrics.bandwidth_kbps(
                    sum(s.bytes for s in w.stats), rounds, w.cfg.round_period_ms, len(w.roster)
                )
            )
            devs.append(metrics.deviation_pct(w.x_trace[-1], opt))
            band = metrics.iterations_to_band(w.x_trace, opt)
            bands.append(rounds if band is None else band)
        print(
            f"{name:<12} {statistics.mean(msgs):>8.1f} {statistics.mean(kbps):>10.2f}"
            f" {statistics.mean(devs):>8.3f} {statistics.mean(bands):>8.1f}"
        )
    print()


def fault_table(graph, rounds):
    print(f"mean dissemination efficiency at round {rounds} (seed 7, crashes at 100/150)")
    cases = [
        ("bpd, 1 crash", Bpd(), BpdConfig(thresh=3, repair_period_rounds=50),
         [FaultEvent(100, "crash", "c")]),
        ("bpd, 2 crashes", Bpd(), BpdConfig(thresh=3, repair_period_rounds=50),
         [FaultEvent(100, "crash", "c"), FaultEvent(150, "crash", "e")]),
        ("unmodified, 1 crash", Unmodified(), None, [FaultEvent(100, "crash", "c")]),
    ]
    for name, strategy, bpd_cfg, faults in cases:
        w = run_world(graph, strategy, bpd_cfg, 7, rounds, faults)
        print(f"  {name:<22} DE = {w.stats[-1].mean_de:.4f}")
    print()


def random_sc_digraph(n, seed, weights=(1, 2), extra_p=0.25):
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


def repair_table(cases):
    print(f"repair batch: {cases} random 6-10 node overlays, one crash each")
    delays, good = [], 0
    for idx in range(cases):
        n = 6 + idx % 5
        graph = random_sc_digraph(n, idx)
        victim = random.Random(f"faults:{idx}").choice(sorted(graph.nodes))
        w = run_world(
            graph, Bpd(),
            BpdConfig(thresh=default_threshold(n), repair_period_rounds=1000),
            idx, 60, [FaultEvent(30, "crash", victim)],
        )
        w.run_repair_cycle()
        eff = w.alive_effective_graph()
        bounded = is_strongly_connected(eff) and all(
            c <= default_threshold(n)
            for row in all_pairs_costs(eff).values()
            for c in row.values()
        )
        good += bounded
        delays.extend(w.repair_delays)
    print(f"  connected and bounded after repair: {good}/{cases}")
    if delays:
        print(
            f"  repair delay rounds: mean {statistics.mean(delays):.2f},"
            f" max {max(delays)}, n={len(delays)}"
        )
    print()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--rounds", type=int, default=300)
    ap.add_argument("--repair-cases", type=int, default=50)
    args = ap.parse_args()

    graph = build_graph(parse_toplink_file(BASE_TL))
    strategy_table(graph, args.seeds, args.rounds)
    fault_table(graph, 260)
    repair_table(args.repair_cases)


if __name__ == "__main__":
    main()
