"""Send/receive group overlay derived from a communication digraph.

Every source peer's out-links are partitioned by weight; each weight class
becomes one group with the source as sender and the link targets as
receivers. A peer may later join further groups in either role (repair and
path-shortening both work by adding memberships, never removing them), so a
group can end up with several senders. The projection back to a digraph is
`effective_graph`: one edge per (alive sender, alive receiver) pair.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .graph import DirectedGraph, NodeId

GroupId = str

SENDER = "sender"
RECEIVER = "receiver"


class UnknownGroupError(KeyError):
    pass


class InvalidNodeError(ValueError):
    pass


class EmptyGroupError(ValueError):
    pass


@dataclass(frozen=True)
class MembershipEvent:
    kind: str  # "MemberJoined" | "MemberLeft"
    group: GroupId
    node: NodeId
    role: str
    round: int = 0


@dataclass
class Group:
    gid: GroupId
    weight: Fraction
    senders: set[NodeId] = field(default_factory=set)
    receivers: set[NodeId] = field(default_factory=set)

    @property
    def members(self) -> set[NodeId]:
        return self.senders | self.receivers

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class GroupAssignment:
    groups: dict[GroupId, Group] = field(default_factory=dict)

    def send_groups(self, node: NodeId) -> list[Group]:
        return [g for _, g in sorted(self.groups.items()) if node in g.senders]

    def recv_groups(self, node: NodeId) -> list[Group]:
        return [g for _, g in sorted(self.groups.items()) if node in g.receivers]

    def groups_of(self, node: NodeId) -> list[Group]:
        return [g for _, g in sorted(self.groups.items()) if node in g.members]

    def copy(self) -> "GroupAssignment":
        return GroupAssignment(
            {
                gid: Group(g.gid, g.weight, set(g.senders), set(g.receivers))
                for gid, g in self.groups.items()
            }
        )

    def membership_snapshot(self) -> dict[GroupId, tuple[frozenset, frozenset]]:
        return {
            gid: (frozenset(g.senders), frozenset(g.receivers))
            for gid, g in self.groups.items()
        }


def form_groups(graph: DirectedGraph) -> GroupAssignment:
    """One group per (source, out-link weight class).

    A source with a single weight class gets group ``g.<src>``; with several,
    ``g.<src>.<i>`` numbered in ascending weight order.
    """
    assignment = GroupAssignment()
    for src in graph.nodes:
        by_weight: dict[Fraction, list[NodeId]] = {}
        for dst, w in graph.out_edges(src):
            by_weight.setdefault(w, []).append(dst)
        if not by_weight:
            continue
        classes = sorted(by_weight.items())
        for i, (w, dsts) in enumerate(classes):
            gid = f"g.{src}" if len(classes) == 1 else f"g.{src}.{i}"
            assignment.groups[gid] = Group(gid, w, {src}, set(dsts))
    return assignment


def effective_graph(assignment: GroupAssignment, alive: set[NodeId]) -> DirectedGraph:
    """Digraph implied by current memberships, restricted to alive peers.

    Parallel group edges for one ordered pair collapse to the lightest.
    """
    edges: dict[tuple[NodeId, NodeId], Fraction] = {}
    present: set[NodeId] = set()
    for _, g in sorted(assignment.groups.items()):
        for u in g.senders:
            if u not in alive:
                continue
            present.add(u)
            for v in g.receivers:
                if v == u or v not in alive:
                    continue
                present.add(v)
                key = (u, v)
                if key not in edges or g.weight < edges[key]:
                    edges[key] = g.weight
    nodes = tuple(sorted(present | (alive & _member_universe(assignment))))
    return DirectedGraph(nodes, edges)


def _member_universe(assignment: GroupAssignment) -> set[NodeId]:
    out: set[NodeId] = set()
    for g in assignment.groups.values():
        out |= g.members
    return out


def join_group(
    assignment: GroupAssignment,
    node: NodeId,
    gid: GroupId,
    role: str,
    *,
    alive: set[NodeId] | None = None,
    round: int = 0,
) -> MembershipEvent | None:
    """Add a membership; idempotent (re-join returns None, emits nothing)."""
    if gid not in assignment.groups:
        raise UnknownGroupError(gid)
    if role not in (SENDER, RECEIVER):
        raise ValueError(f"bad role {role!r}")
    if alive is not None and node not in alive:
        raise InvalidNodeError(f"{node!r} is not alive")
    grp = assignment.groups[gid]
    target = grp.senders if role == SENDER else grp.receivers
    if node in target:
        return None
    target.add(node)
    return MembershipEvent("MemberJoined", gid, node, role, round)


def leave_all(assignment: GroupAssignment, node: NodeId) -> list[tuple[GroupId, str]]:
    """Strip a peer from every group, returning what was removed (for rejoin)."""
    removed: list[tuple[GroupId, str]] = []
    for gid, g in sorted(assignment.groups.items()):
        if node in g.senders:
            g.senders.discard(node)
            removed.append((gid, SENDER))
        if node in g.receivers:
            g.receivers.discard(node)
            removed.append((gid, RECEIVER))
    return removed


def elect_leader(group: Group, alive: set[NodeId]) -> NodeId:
    """Deterministic: the lexicographically smallest alive member."""
    candidates = sorted(m for m in group.members if m in alive)
    if not candidates:
        raise EmptyGroupError(f"group {group.gid} has no alive members")
    return candidates[0]


def leader_group(assignment: GroupAssignment, alive: set[NodeId]) -> set[NodeId]:
    """The per-group leaders of every group that still has alive members."""
    leaders: set[NodeId] = set()
    for _, g in sorted(assignment.groups.items()):
        try:
            leaders.add(elect_leader(g, alive))
        except EmptyGroupError:
            continue
    return leaders
