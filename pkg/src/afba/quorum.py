"""Slice-induced quorum graphs, SCC analysis and quorum-intersection checks."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import AbstractSet, Iterable, Mapping, NamedTuple, Optional

from afba.model import QuorumSlice


@dataclass(frozen=True)
class QuorumGraph:
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]

    def successors(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {v: [] for v in self.nodes}
        for a, b in self.edges:
            adj[a].append(b)
        for v in adj:
            adj[v].sort()
        return adj


@dataclass(frozen=True)
class SccReport:
    component_count: int
    components: tuple[frozenset[str], ...]

    @property
    def globally_connected(self) -> bool:
        return self.component_count == 1


class UnknownNode(KeyError):
    pass


def build_graph(
    slices: Mapping[str, QuorumSlice],
    active: AbstractSet[str],
    known: Optional[AbstractSet[str]] = None,
) -> QuorumGraph:
    """Directed graph over ``active``: ``a -> b`` iff ``b`` is in ``a``'s slice.

    Slices of inactive owners and members outside ``active`` contribute no
    edges. With ``known`` given, any slice member outside it is an error.
    """
    edges = set()
    for owner, sl in slices.items():
        if known is not None:
            bad = [m for m in sl.members if m not in known]
            if bad or owner not in known:
                raise UnknownNode(f"slice of {owner!r} references unknown ids {sorted(bad) or [owner]}")
        if owner not in active:
            continue
        for m in sl.members:
            if m in active and m != owner:
                edges.add((owner, m))
    return QuorumGraph(frozenset(active), frozenset(edges))


def tarjan(nodes: Iterable[str], adj: Mapping[str, Iterable[str]]) -> list[list[str]]:
    """Iterative Tarjan; components come out in reverse topological order."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    out: list[list[str]] = []
    counter = 0

    for root in nodes:
        if root in index:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        work = [(root, iter(adj.get(root, ())))]
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(adj.get(w, ()))))
                    advanced = True
                    break
                if w in on_stack and index[w] < low[v]:
                    low[v] = index[w]
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                if low[v] < low[parent]:
                    low[parent] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def scc(graph: QuorumGraph) -> SccReport:
    adj = graph.successors()
    comps = tarjan(sorted(graph.nodes), adj)
    parts = sorted((frozenset(c) for c in comps), key=min)
    return SccReport(len(parts), tuple(parts))


def scc_count(slices: Mapping[str, QuorumSlice], active: AbstractSet[str]) -> int:
    return scc(build_graph(slices, active)).component_count


class InstanceTooLarge(ValueError):
    pass


def _closure(start: str, slices: Mapping[str, QuorumSlice], active: AbstractSet[str]) -> Optional[frozenset[str]]:
    # smallest set containing start that holds every member's slice; None if it
    # must leave the active set
    seen = {start}
    todo = [start]
    while todo:
        v = todo.pop()
        sl = slices.get(v)
        if sl is None:
            return None
        for m in sl.members:
            if m not in active:
                return None
            if m not in seen:
                seen.add(m)
                todo.append(m)
    return frozenset(seen)


def enumerate_quorums(
    slices: Mapping[str, QuorumSlice],
    active: AbstractSet[str],
    max_n: int = 16,
) -> frozenset[frozenset[str]]:
    """All minimal quorums inside ``active``.

    A quorum is a non-empty ``U`` with ``Q(v) | {v} <= U`` for each member.
    Every minimal quorum is the closure of any of its members, so taking the
    inclusion-minimal closures finds them all. Active nodes without a slice
    can never be satisfied and belong to no quorum.
    """
    if len(active) > max_n:
        raise InstanceTooLarge(f"{len(active)} active nodes exceeds max_n={max_n}")
    closures = {c for v in active if (c := _closure(v, slices, active)) is not None}
    return frozenset(c for c in closures if not any(o < c for o in closures))


class IntersectionResult(NamedTuple):
    intersects: bool
    pair: Optional[tuple[frozenset[str], frozenset[str]]]
    quorums: frozenset[frozenset[str]]


def check_intersection(
    slices: Mapping[str, QuorumSlice],
    active: AbstractSet[str],
    max_n: int = 16,
) -> IntersectionResult:
    quorums = enumerate_quorums(slices, active, max_n)
    ordered = sorted(quorums, key=lambda q: (len(q), sorted(q)))
    for a, b in combinations(ordered, 2):
        if not a & b:
            return IntersectionResult(False, (a, b), quorums)
    return IntersectionResult(True, None, quorums)


def byzantine_bound(n: int) -> int:
    """Largest ``f`` with ``n >= 3f + 1``."""
    if n < 1:
        raise ValueError("n must be positive")
    return (n - 1) // 3
