"""Sender-plan balancing via two edge-disjoint perfect matchings.

When S/K is an integer gamma and every server appears in the same number
of cover members, a bipartite graph on gamma copies of each server vs.
the members is biregular.  A first perfect matching assigns the coded
duty of every member; removing all copy-edges of each matched pair
leaves a gamma*(g-1)-regular graph whose second matching assigns the
uncoded duties.  Every server then transmits exactly 2*S*beta*T/K bytes,
half coded and half uncoded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Mapping, Sequence

from .covers import row_regularity
from .matrix import BinaryComputingMatrix, IdentityCover
from .shuffle import ShuffleTranscript


class BalanceError(Exception):
    """Balancing preconditions do not hold for this matrix and cover."""


LeftVertex = tuple[str, int]          # (server label, copy index)


@dataclass(frozen=True)
class BalanceGraph:
    """Replicated server/member bipartite graph."""

    adj: dict[LeftVertex, tuple[int, ...]]
    num_members: int
    gamma: int

    @property
    def left(self) -> tuple[LeftVertex, ...]:
        return tuple(self.adj)


@dataclass
class BalanceReport:
    gamma: Fraction
    gamma_integral: bool
    row_regular: bool
    counts: dict[str, int]

    @property
    def ok(self) -> bool:
        return self.gamma_integral and self.row_regular


@dataclass(frozen=True)
class SenderPlan:
    """Per member, the (coded, uncoded) sender pair."""

    duties: tuple[tuple[str, str], ...]

    def as_mapping(self) -> dict[int, tuple[str, str]]:
        return dict(enumerate(self.duties))

    def coded_members(self, server: str) -> tuple[int, ...]:
        return tuple(i for i, (c, _) in enumerate(self.duties) if c == server)

    def uncoded_members(self, server: str) -> tuple[int, ...]:
        return tuple(i for i, (_, u) in enumerate(self.duties) if u == server)

    def to_json(self) -> str:
        payload = {
            str(i): {"coded": c, "uncoded": u} for i, (c, u) in enumerate(self.duties)
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SenderPlan":
        payload = json.loads(text)
        duties = [
            (payload[str(i)]["coded"], payload[str(i)]["uncoded"])
            for i in range(len(payload))
        ]
        return cls(tuple(duties))


def balance_preconditions(m: BinaryComputingMatrix, c: IdentityCover) -> BalanceReport:
    """Check gamma integrality and per-server appearance regularity."""
    gamma = Fraction(c.size, m.K)
    reg = row_regularity(c, m)
    return BalanceReport(
        gamma=gamma,
        gamma_integral=gamma.denominator == 1,
        row_regular=reg.regular,
        counts=reg.counts,
    )


def build_balance_graph(m: BinaryComputingMatrix, c: IdentityCover, gamma: int) -> BalanceGraph:
    adj: dict[LeftVertex, tuple[int, ...]] = {}
    membership: dict[str, list[int]] = {k: [] for k in m.rows}
    for idx, member in enumerate(c.members):
        for k in member.rows:
            membership[k].append(idx)
    for k in m.rows:
        for j in range(gamma):
            adj[(k, j)] = tuple(membership[k])
    return BalanceGraph(adj=adj, num_members=c.size, gamma=gamma)


def perfect_matching(
    adj: Mapping[Hashable, Sequence[Hashable]]
) -> dict[Hashable, Hashable]:
    """Perfect matching of a d-regular bipartite graph with equal sides.

    Plain augmenting-path search; regularity guarantees a perfect
    matching exists, so anything short of one is an internal error.
    Deterministic under a fixed vertex order.
    """
    left = list(adj)
    rights: list[Hashable] = []
    seen_right = set()
    for l in left:
        for r in adj[l]:
            if r not in seen_right:
                seen_right.add(r)
                rights.append(r)
    if len(left) != len(rights):
        raise BalanceError(
            f"sides differ: {len(left)} left vertices vs {len(rights)} right"
        )
    degrees = {len(adj[l]) for l in left}
    right_deg: dict[Hashable, int] = {}
    for l in left:
        for r in adj[l]:
            right_deg[r] = right_deg.get(r, 0) + 1
    degrees |= set(right_deg.values())
    if len(degrees) != 1 or next(iter(degrees)) < 1:
        raise BalanceError(f"graph is not d-regular (degrees {sorted(degrees)})")

    match_left: dict[Hashable, Hashable] = {}
    match_right: dict[Hashable, Hashable] = {}

    def augment(l: Hashable, visited: set[Hashable]) -> bool:
        for r in adj[l]:
            if r in visited:
                continue
            visited.add(r)
            if r not in match_right or augment(match_right[r], visited):
                match_left[l] = r
                match_right[r] = l
                return True
        return False

    for l in left:
        if not augment(l, set()):
            raise RuntimeError(
                "no perfect matching found on a regular bipartite graph; "
                "this contradicts regularity and indicates a bug"
            )
    return match_left


def remove_matched_member_edges(
    graph: BalanceGraph, coded_by_member: Mapping[int, str]
) -> dict[LeftVertex, tuple[int, ...]]:
    """Drop every copy-edge of (server, member) pairs picked by the first
    matching, leaving a gamma*(g-1)-regular residual graph."""
    return {
        left: tuple(i for i in members if coded_by_member[i] != left[0])
        for left, members in graph.adj.items()
    }


def build_sender_plan(m: BinaryComputingMatrix, c: IdentityCover) -> SenderPlan:
    """Two-matching construction of a balanced sender plan.

    Raises BalanceError when gamma is not integral or the cover is not
    row-regular; raises RuntimeError on internal consistency violations
    (which would indicate a bug, not bad input).
    """
    g = c.uniform_size
    if g is None or g < 2:
        raise BalanceError("balancing needs a uniform cover with member size >= 2")
    report = balance_preconditions(m, c)
    if not report.gamma_integral:
        raise BalanceError(f"gamma = S/K = {report.gamma} is not an integer")
    if not report.row_regular:
        raise BalanceError("servers appear in differing numbers of members")
    gamma = int(report.gamma)
    graph = build_balance_graph(m, c, gamma)

    first = perfect_matching(graph.adj)
    coded_by_member: dict[int, str] = {}
    for (server, _copy), member in first.items():
        if member in coded_by_member:
            raise RuntimeError("first matching assigned a member twice")
        coded_by_member[member] = server

    residual = remove_matched_member_edges(graph, coded_by_member)
    want = gamma * (g - 1)
    right_deg: dict[int, int] = {}
    for left, members in residual.items():
        if len(members) != want:
            raise RuntimeError(
                f"residual degree of {left} is {len(members)}, expected {want}"
            )
        for i in members:
            right_deg[i] = right_deg.get(i, 0) + 1
    for i in range(c.size):
        if right_deg.get(i, 0) != want:
            raise RuntimeError(
                f"residual degree of member {i} is {right_deg.get(i, 0)}, expected {want}"
            )

    second = perfect_matching(residual)
    uncoded_by_member: dict[int, str] = {}
    for (server, _copy), member in second.items():
        uncoded_by_member[member] = server

    duties = []
    for i in range(c.size):
        coded, uncoded = coded_by_member[i], uncoded_by_member[i]
        if coded == uncoded:
            raise RuntimeError(f"member {i}: both duties landed on {coded!r}")
        duties.append((coded, uncoded))
    return SenderPlan(tuple(duties))


@dataclass
class AuditReport:
    """Per-server sent bytes split by kind, plus the balanced verdict."""

    per_server: dict[str, tuple[int, int]]   # server -> (coded bytes, uncoded bytes)
    expected_each: Fraction
    balanced: bool

    def to_csv(self) -> str:
        lines = ["server,coded_bytes,uncoded_bytes"]
        for k, (cb, ub) in self.per_server.items():
            lines.append(f"{k},{cb},{ub}")
        return "\n".join(lines) + "\n"


def audit_plan(plan: SenderPlan, transcript: ShuffleTranscript) -> AuditReport:
    """Check that every server sent exactly S*beta*T/K bytes of each kind."""
    per_server = {k: [0, 0] for k in transcript.servers}
    for tx in transcript.transmissions:
        slot = 0 if tx.kind == "coded" else 1
        per_server[tx.sender][slot] += len(tx.payload)
    expected = Fraction(len(plan.duties) * transcript.payload_bytes, len(transcript.servers))
    balanced = (
        len(transcript.transmissions) == 2 * len(plan.duties)
        and all(cb == expected and ub == expected for cb, ub in per_server.values())
    )
    return AuditReport(
        per_server={k: (v[0], v[1]) for k, v in per_server.items()},
        expected_each=expected,
        balanced=balanced,
    )
