"""Deterministic round-based network simulator.

Application data is round-paced: a message sent in round k is delivered in
round k+1, with no loss or reordering among live peers. Protocol control
traffic (discovery, path updates, membership repair) instead completes
within the round that triggers it: those exchanges take a network round
trip, which at a 10 ms iteration period is far below one round, so the
simulator cascades control deliveries to quiescence inside the round.
Everything is driven from sorted orders and seeded generators, so a run is a
pure function of its configuration.

Crashed peers neither send nor receive. Messages addressed to one are still
counted as sent and then dropped, because the senders cannot know better
until the missed-heartbeat detector fires: a crash in round r is detected in
exactly round r + detection_rounds, at which point the peer leaves its
groups (kept stashed so a later recovery can rejoin them) and the repair
handlers run.
"""
from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from . import metrics
from .bpd import (
    BpdConfig,
    BpdNode,
    DiscoverMsg,
    GrpAns,
    GrpQry,
    HandlerResult,
    JoinRep,
    JoinReq,
    UpdateMsg,
)
from .graph import DirectedGraph, NodeId, hop_counts, is_strongly_connected
from .groups import (
    GroupAssignment,
    MembershipEvent,
    effective_graph,
    form_groups,
    join_group,
    leave_all,
)
from .workloads import Bpd, Strategy, consensus_step, init_values, strategy_emit

_CASCADE_CAP = 2_000_000

IDLE, DISCOVERING, UPDATING = "idle", "discovering", "updating"


class UnknownNodeError(KeyError):
    pass


class FaultError(ValueError):
    pass


class UnreachableError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_rounds: int
    seed: int = 0
    round_period_ms: float = 10.0
    payload_bytes: int = 64
    control_bytes: int = 32
    detection_rounds: int = 1
    de_window_rounds: int | None = None  # default: 2 * roster size
    per_hop_delay_ms: float = 0.6
    eps: float = 0.5

    def __post_init__(self):
        if self.n_rounds < 0 or self.detection_rounds < 1:
            raise ValueError("bad round counts")
        if self.round_period_ms <= 0 or self.payload_bytes < 0:
            raise ValueError("bad period or payload")


@dataclass(frozen=True)
class FaultEvent:
    round: int
    action: str  # "crash" | "recover"
    node: NodeId


def validate_schedule(faults: list[FaultEvent], roster: set[NodeId]) -> None:
    crashed: set[NodeId] = set()
    last = 0
    for ev in faults:
        if ev.node not in roster:
            raise UnknownNodeError(ev.node)
        if ev.round < last:
            raise FaultError("fault schedule must be sorted by round")
        last = ev.round
        if ev.action == "crash":
            if ev.node in crashed:
                raise FaultError(f"{ev.node} crashed twice without recovery")
            crashed.add(ev.node)
        elif ev.action == "recover":
            if ev.node not in crashed:
                raise FaultError(f"{ev.node} recovered while alive")
            crashed.discard(ev.node)
        else:
            raise FaultError(f"unknown fault action {ev.action!r}")


@dataclass
class RoundStats:
    round: int
    messages: int
    control_messages: int
    bytes: int
    mean_de: float
    min_de: float
    max_x: float
    min_x: float
    hops_histogram: dict[int, int] = field(default_factory=dict)


@dataclass
class _AppMsg:
    src: NodeId
    dst: NodeId
    x: float
    stamps: dict[NodeId, int]


class World:
    def __init__(
        self,
        graph: DirectedGraph,
        strategy: Strategy,
        cfg: SimConfig,
        bpd_cfg: BpdConfig | None = None,
        faults: list[FaultEvent] | None = None,
        trace_fn=None,
    ):
        self.graph0 = graph
        self.strategy = strategy
        self.cfg = cfg
        self.roster: list[NodeId] = list(graph.nodes)
        self.window = cfg.de_window_rounds or 2 * len(self.roster)
        self.faults = list(faults or [])
        validate_schedule(self.faults, set(self.roster))
        self.trace_fn = trace_fn

        self.assignment: GroupAssignment = form_groups(graph)
        if isinstance(strategy, Bpd):
            if bpd_cfg is None:
                raise ValueError("bpd strategy needs a BpdConfig")
            if Fraction(bpd_cfg.thresh) < graph.max_weight():
                raise ValueError(
                    f"thresh {bpd_cfg.thresh} below max edge weight {graph.max_weight()}"
                )
        self.bpd_cfg = bpd_cfg

        self.alive: set[NodeId] = set(self.roster)
        self.detected_alive: set[NodeId] = set(self.roster)
        self.undetected: set[NodeId] = set()
        self.crashed_at: dict[NodeId, int] = {}
        self.stash: dict[NodeId, list[tuple[str, str]]] = {}

        self.nodes: dict[NodeId, BpdNode] = {n: BpdNode(n) for n in self.roster}
        self.x: dict[NodeId, float] = init_values(self.roster, cfg.seed)
        self.x0 = dict(self.x)
        self.stamps: dict[NodeId, dict[NodeId, int]] = {n: {n: 0} for n in self.roster}
        self.de_hist: dict[NodeId, dict[NodeId, int]] = {n: {} for n in self.roster}
        self.gossip_rng = random.Random(f"{cfg.seed}:gossip")

        self.round = 0
        self.epoch = 0
        self.phase = IDLE
        self._ctrl: deque = deque()
        self._app_inflight: list[_AppMsg] = []
        self.stats: list[RoundStats] = []
        self.x_trace: list[dict[NodeId, float]] = []
        self.de_trace: list[dict[NodeId, float]] = []
        self.events: list[MembershipEvent] = []
        self.not_connected_rounds: list[int] = []
        self.repair_delays: list[int] = []
        self.last_crash_round = 0
        self.edges_initial = self.effective_edge_count()

        self._app_sent = 0
        self._ctrl_sent = 0
        self._bytes = 0
        self._hops: dict[int, int] = {}

    # --- public driving --------------------------------------------------

    def run(self) -> None:
        for _ in range(self.cfg.n_rounds):
            self.step_round()

    def step_round(self) -> RoundStats:
        self.round += 1
        self._app_sent = self._ctrl_sent = self._bytes = 0
        self._hops = {}
        consensus_in: dict[NodeId, dict[NodeId, float]] = {n: {} for n in self.roster}

        for ev in self.faults:
            if ev.round == self.round:
                self.inject_fault(ev.node, ev.action)

        self._deliver_app(consensus_in)
        self._detect()
        if isinstance(self.strategy, Bpd) and (self.round - 1) % self.bpd_cfg.repair_period_rounds == 0:
            self._start_cycle()
        self._drain_control()
        self._poll_timeouts()

        for n in sorted(self.alive):
            self.x[n] = consensus_step(self.x[n], consensus_in[n], self.cfg.eps)
        self._send_app()
        self._ctrl_sent += len(self.alive)  # heartbeats
        self._bytes += len(self.alive) * self.cfg.control_bytes

        return self._close_round()

    def inject_fault(self, node: NodeId, action: str) -> None:
        if node not in self.nodes:
            raise UnknownNodeError(node)
        if action == "crash":
            if node not in self.alive:
                raise FaultError(f"{node} is already down")
            self.alive.discard(node)
            self.undetected.add(node)
            self.crashed_at[node] = self.round
            self.last_crash_round = self.round
            self._trace(f"fault crash {node}")
        elif action == "recover":
            if node in self.alive:
                return
            self.alive.add(node)
            if node in self.undetected:
                # came back before anyone noticed; memberships were never dropped
                self.undetected.discard(node)
            else:
                self.detected_alive.add(node)
                for gid, role in self.stash.pop(node, []):
                    ev = join_group(self.assignment, node, gid, role, round=self.round)
                    if ev:
                        self.events.append(ev)
            self.crashed_at.pop(node, None)
            self._trace(f"fault recover {node}")
        else:
            raise FaultError(f"unknown fault action {action!r}")

    def run_repair_cycle(self) -> GroupAssignment:
        """Force one full discovery + update cycle to quiescence right now."""
        self._start_cycle()
        self._drain_control()
        self._poll_timeouts()
        return self.assignment

    def estimate_latency(self, src: NodeId, dst: NodeId) -> float:
        if src not in self.nodes or dst not in self.nodes:
            raise UnknownNodeError(src if src not in self.nodes else dst)
        if src == dst:
            return 0.0
        eff = effective_graph(self.assignment, self.alive)
        if src not in eff.nodes:
            raise UnreachableError(f"{dst} unreachable from {src}")
        hops = hop_counts(eff, src)
        if dst not in hops:
            raise UnreachableError(f"{dst} unreachable from {src}")
        return hops[dst] * self.cfg.per_hop_delay_ms

    def effective_edge_count(self) -> int:
        return effective_graph(self.assignment, set(self.roster)).n_edges

    def alive_effective_graph(self) -> DirectedGraph:
        return effective_graph(self.assignment, set(self.alive))

    # --- internals --------------------------------------------------------

    def _deliver_app(self, consensus_in) -> None:
        inflight, self._app_inflight = self._app_inflight, []
        for msg in inflight:
            if msg.dst not in self.alive:
                continue
            consensus_in[msg.dst][msg.src] = msg.x
            mine = self.stamps[msg.dst]
            hist = self.de_hist[msg.dst]
            for origin, stamp in msg.stamps.items():
                if stamp > mine.get(origin, -1):
                    mine[origin] = stamp
                    if origin != msg.dst:
                        metrics.record_receipt(hist, origin, self.round)
                        lag = self.round - stamp
                        self._hops[lag] = self._hops.get(lag, 0) + 1
            self._trace(f"deliver app {msg.src} {msg.dst}")

    def _detect(self) -> None:
        due = sorted(
            n
            for n in self.undetected
            if self.round - self.crashed_at[n] >= self.cfg.detection_rounds
        )
        if not due:
            return
        affected: list[tuple[NodeId, str, str]] = []
        for n in due:
            self.undetected.discard(n)
            self.detected_alive.discard(n)
            removed = leave_all(self.assignment, n)
            self.stash[n] = removed
            for gid, role in removed:
                self.events.append(MembershipEvent("MemberLeft", gid, n, role, self.round))
                affected.append((n, gid, role))
                self._trace(f"member-left {gid} {n} {role}")
        if not isinstance(self.strategy, Bpd):
            return
        seen: set[tuple[NodeId, str]] = set()
        for departed, gid, _role in affected:
            if (departed, gid) in seen:
                continue
            seen.add((departed, gid))
            grp = self.assignment.groups[gid]
            for m in sorted(grp.members & self.alive):
                res = self.nodes[m].on_member_left(
                    grp,
                    departed,
                    self.assignment,
                    self.detected_alive,
                    self.round,
                    self.bpd_cfg.reply_timeout_rounds,
                )
                self._apply_result(m, res)

    def _start_cycle(self) -> None:
        self.epoch += 1
        self.phase = DISCOVERING
        for n in sorted(self.alive):
            res = self.nodes[n].start_discovery(self.epoch, self.assignment, self.detected_alive)
            self._apply_result(n, res)
        for n in sorted(self.alive):
            res = self.nodes[n].take_retries(
                self.assignment,
                self.detected_alive,
                self.round,
                self.bpd_cfg.reply_timeout_rounds,
            )
            self._apply_result(n, res)

    def _drain_control(self) -> None:
        guard = 0
        while True:
            while self._ctrl:
                guard += 1
                if guard > _CASCADE_CAP:
                    raise RuntimeError("control cascade did not quiesce")
                dst, gid, msg = self._ctrl.popleft()
                if dst not in self.alive:
                    continue
                self._dispatch(dst, gid, msg)
            if self.phase == DISCOVERING:
                self.phase = UPDATING
                thresh = Fraction(self.bpd_cfg.thresh)
                for n in sorted(self.alive):
                    node = self.nodes[n]
                    targets = node.update_targets(thresh)
                    if targets:
                        res = node.start_update(targets, self.assignment, thresh)
                        self._apply_result(n, res)
                continue
            if self.phase == UPDATING:
                self.phase = IDLE
                eff = effective_graph(self.assignment, set(self.detected_alive))
                if not is_strongly_connected(eff):
                    self.not_connected_rounds.append(self.round)
                self._trace(f"cycle-complete epoch {self.epoch}")
                continue
            break

    def _dispatch(self, dst: NodeId, gid: str | None, msg) -> None:
        node = self.nodes[dst]
        if isinstance(msg, DiscoverMsg):
            grp = self.assignment.groups.get(gid)
            if grp is None:
                return
            res = node.on_discover(msg, grp, self.assignment)
        elif isinstance(msg, UpdateMsg):
            grp = self.assignment.groups.get(gid)
            if grp is None:
                return
            res = node.on_update(
                msg, grp, self.assignment, self.detected_alive, Fraction(self.bpd_cfg.thresh)
            )
        elif isinstance(msg, JoinReq):
            res = node.on_join_req(msg, self.assignment, self.detected_alive)
        elif isinstance(msg, JoinRep):
            res = node.on_join_rep(msg, self.assignment, self.detected_alive)
        elif isinstance(msg, GrpQry):
            res = node.on_grp_qry(msg, self.assignment)
        elif isinstance(msg, GrpAns):
            res = node.on_grp_ans(
                msg,
                self.assignment,
                self.detected_alive,
                self.round,
                self.bpd_cfg.reply_timeout_rounds,
            )
        else:
            raise TypeError(f"unknown control message {msg!r}")
        self._apply_result(dst, res)

    def _apply_result(self, emitter: NodeId, res: HandlerResult) -> None:
        for emission in res.emissions:
            kind = emission[0]
            self._ctrl_sent += 1
            self._bytes += self.cfg.control_bytes
            if kind == "group":
                _, gid, msg = emission
                grp = self.assignment.groups.get(gid)
                if grp is None:
                    continue
                for m in sorted(grp.members - {emitter}):
                    self._ctrl.append((m, gid, msg))
            elif kind == "multi":
                _, dsts, msg = emission
                for d in dsts:
                    self._ctrl.append((d, None, msg))
            else:
                raise ValueError(f"unknown emission kind {kind!r}")
        for intent in res.joins:
            ev = join_group(
                self.assignment, intent.node, intent.gid, intent.role, round=self.round
            )
            if ev:
                self.events.append(ev)
                self._trace(f"join {intent.gid} {intent.node} {intent.role} {intent.reason}")
                if intent.reason.startswith("repair:"):
                    self.repair_delays.append(self.round - self.last_crash_round)

    def _poll_timeouts(self) -> None:
        if not isinstance(self.strategy, Bpd):
            return
        for n in sorted(self.alive):
            node = self.nodes[n]
            if not node.pending_join and not node.pending_query:
                continue
            res = node.poll(
                self.assignment,
                self.detected_alive,
                self.round,
                self.bpd_cfg.reply_timeout_rounds,
            )
            self._apply_result(n, res)
        self._drain_control()

    def _send_app(self) -> None:
        for n in sorted(self.alive):
            self.stamps[n][n] = self.round
            dsts = strategy_emit(self.strategy, n, self)
            if not dsts:
                continue
            snapshot = dict(self.stamps[n])
            xval = self.x[n]
            for dst in dsts:
                self._app_inflight.append(_AppMsg(n, dst, xval, snapshot))
            self._app_sent += len(dsts)
            self._bytes += len(dsts) * self.cfg.payload_bytes

    def _close_round(self) -> RoundStats:
        des: dict[NodeId, float] = {}
        for n in sorted(self.alive):
            metrics.purge(self.de_hist[n], self.round, self.window)
            des[n] = metrics.dissemination_efficiency(
                self.de_hist[n], self.detected_alive, n, len(self.roster)
            )
        xs = {n: self.x[n] for n in sorted(self.alive)}
        row = RoundStats(
            round=self.round,
            messages=self._app_sent,
            control_messages=self._ctrl_sent,
            bytes=self._bytes,
            mean_de=sum(des.values()) / len(des) if des else 1.0,
            min_de=min(des.values()) if des else 1.0,
            max_x=max(xs.values()) if xs else 0.0,
            min_x=min(xs.values()) if xs else 0.0,
            hops_histogram=dict(sorted(self._hops.items())),
        )
        self.stats.append(row)
        self.x_trace.append(xs)
        self.de_trace.append(des)
        return row

    def _trace(self, text: str) -> None:
        if self.trace_fn is not None:
            self.trace_fn(f"round={self.round} {text}")
