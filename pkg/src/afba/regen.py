"""Adaptive quorum-slice regeneration.

Each attempt rebuilds a slice for every active validator under three
criteria (mean member reputation at least ``r_avg``, size inside
``[slice_min, slice_max]``, at least ``min_orgs`` organizations) and keeps the
configuration if the induced quorum graph is a single strongly connected
component. When the attempt budget runs out the caller is told to fall back
to core mode.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from afba.model import NetworkSnapshot, QuorumSlice, active_set
from afba.quorum import QuorumGraph, build_graph, byzantine_bound, scc
from afba.reputation import ReputationState, TrustCategory


@dataclass(frozen=True)
class RegenerationParams:
    r_avg: float = 0.56
    min_orgs: int = 3
    slice_min: int = 3
    slice_max: int = 7
    max_attempts: int = 100
    seed: int = 0
    # fewest active validators regeneration will certify; None -> f + 1 for the
    # registered network size
    min_active: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.r_avg <= 1.0:
            raise ValueError("r_avg must lie in [0, 1]")
        if not 1 <= self.slice_min <= self.slice_max:
            raise ValueError("need 1 <= slice_min <= slice_max")
        if self.min_orgs < 1:
            raise ValueError("min_orgs must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


class Candidate(NamedTuple):
    id: str
    org: str
    reputation: float


class TriggerKind(enum.Enum):
    STRUCTURAL_FAILURE = "StructuralFailure"
    TRUST_DEGRADATION = "TrustDegradation"


@dataclass(frozen=True)
class RegenerationTrigger:
    kind: TriggerKind
    # component partition for structural failures, blacklisted ids otherwise
    detail: tuple


@dataclass(frozen=True)
class RegenerationResult:
    connected: bool
    attempts_used: int
    slices: Mapping[str, QuorumSlice] = field(default_factory=dict)
    fallback_engaged: bool = False
    reason: str = ""


class SliceError(Exception):
    pass


class InsufficientDiversity(SliceError):
    pass


class ReputationUnattainable(SliceError):
    pass


class NoActiveValidators(ValueError):
    pass


def detect_trigger(
    graph: QuorumGraph,
    reputation: Mapping[str, ReputationState],
    previous: Mapping[str, ReputationState],
) -> Optional[RegenerationTrigger]:
    report = scc(graph)
    if report.component_count != 1:
        return RegenerationTrigger(TriggerKind.STRUCTURAL_FAILURE, report.components)
    newly = sorted(
        node
        for node, st in reputation.items()
        if st.category is TrustCategory.BLACKLISTED
        and (node not in previous or previous[node].category is not TrustCategory.BLACKLISTED)
    )
    if newly:
        return RegenerationTrigger(TriggerKind.TRUST_DEGRADATION, tuple(newly))
    return None


def target_size(org_sizes: Sequence[int], params: RegenerationParams) -> int:
    """Slice size tied to organizational granularity, clamped to the size bounds."""
    mean = sum(org_sizes) / len(org_sizes) if org_sizes else 0.0
    size = params.min_orgs + math.ceil(mean / 2)
    return max(params.slice_min, min(params.slice_max, size))


def _best_subset(pool: Sequence[Candidate], params: RegenerationParams) -> list[Candidate]:
    """Highest-mean member set that meets the size and diversity criteria."""
    leaders: dict[str, Candidate] = {}
    for c in pool:
        cur = leaders.get(c.org)
        if cur is None or (-c.reputation, c.id) < (-cur.reputation, cur.id):
            leaders[c.org] = c
    ranked = sorted(leaders.values(), key=lambda c: (-c.reputation, c.id))
    chosen = ranked[: params.min_orgs]
    taken = {c.id for c in chosen}
    rest = sorted((c for c in pool if c.id not in taken), key=lambda c: (-c.reputation, c.id))
    cap = min(params.slice_max, len(pool))
    total = sum(c.reputation for c in chosen)
    for c in rest:
        if len(chosen) >= cap:
            break
        if len(chosen) >= params.slice_min and c.reputation * len(chosen) <= total:
            break
        chosen.append(c)
        total += c.reputation
    return chosen


def _mean(members: Sequence[Candidate]) -> float:
    return sum(c.reputation for c in members) / len(members)


class _Pool:
    """Eligible candidates indexed once and shared by every slice of a regeneration."""

    def __init__(self, candidates: Sequence[Candidate], params: RegenerationParams):
        self.params = params
        self.all = list(candidates)
        self.by_org: dict[str, list[Candidate]] = defaultdict(list)
        for c in self.all:
            self.by_org[c.org].append(c)
        self.orgs = sorted(self.by_org)
        self.ranked = sorted(self.all, key=lambda c: (-c.reputation, c.id))
        self.best = _best_subset(self.all, params) if self.all else []
        self._best_ids = {c.id for c in self.best}
        self._best_without: dict[str, float] = {}
        self._org_of = {c.id: c.org for c in self.all}

    def org_sizes(self) -> list[int]:
        return [len(m) for m in self.by_org.values()]

    def available(self, owner: str) -> int:
        return len(self.all) - (owner in self._org_of)

    def check(self, owner: str) -> None:
        """Raise if no valid slice exists for ``owner`` in this pool."""
        p = self.params
        org = self._org_of.get(owner)
        n_orgs = len(self.by_org) - (1 if org is not None and len(self.by_org[org]) == 1 else 0)
        n_pool = self.available(owner)
        if n_orgs < p.min_orgs or n_pool < p.slice_min:
            raise InsufficientDiversity(
                f"{owner}: pool spans {n_orgs} organizations / {n_pool} nodes, need {p.min_orgs} / {p.slice_min}"
            )
        if owner in self._best_ids:
            if owner not in self._best_without:
                self._best_without[owner] = _mean(_best_subset([c for c in self.all if c.id != owner], p))
            best = self._best_without[owner]
        else:
            best = _mean(self.best)
        if best < p.r_avg:
            raise ReputationUnattainable(f"{owner}: best achievable mean {best:.3f} < r_avg {p.r_avg:.3f}")

    def build(self, owner: str, rng: np.random.Generator, load: Mapping[str, int], size: int) -> list[Candidate]:
        p = self.params
        size = max(p.slice_min, min(size, p.slice_max, self.available(owner)))
        order = [self.orgs[i] for i in rng.permutation(len(self.orgs))]
        picked: list[Candidate] = []
        taken = {owner}
        while len(picked) < size:
            before = len(picked)
            for org in order:
                best = None
                best_key = None
                for c in self.by_org[org]:
                    if c.id in taken:
                        continue
                    key = (load.get(c.id, 0), -c.reputation, c.id)
                    if best_key is None or key < best_key:
                        best, best_key = c, key
                if best is not None:
                    picked.append(best)
                    taken.add(best.id)
                    if len(picked) == size:
                        break
            if len(picked) == before:
                break
        if _mean(picked) < p.r_avg:
            picked = self._repair(owner, picked)
        return picked

    def _repair(self, owner: str, picked: list[Candidate]) -> list[Candidate]:
        # swap the weakest non-anchor members for the most reputable outsiders;
        # the first pick is the anchor and goes last
        p = self.params
        anchor = picked[0]
        members = list(picked)

        def org_count(drop: Candidate, add: Optional[Candidate] = None) -> int:
            orgs = {c.org for c in members if c is not drop}
            if add is not None:
                orgs.add(add.org)
            return len(orgs)

        while _mean(members) < p.r_avg:
            ids = {c.id for c in members}
            changed = False
            for low in sorted((c for c in members if c is not anchor), key=lambda c: (c.reputation, c.id)):
                swap = None
                for o in self.ranked:
                    if o.reputation <= low.reputation:
                        break
                    if o.id in ids or o.id == owner:
                        continue
                    if org_count(low, o) >= p.min_orgs:
                        swap = o
                        break
                if swap is not None:
                    members[members.index(low)] = swap
                    changed = True
                    break
                if len(members) > p.slice_min and low.reputation < _mean(members) and org_count(low) >= p.min_orgs:
                    members.remove(low)
                    changed = True
                    break
            if not changed:
                return _best_subset([c for c in self.all if c.id != owner], p)
        return members


def generate_slice(
    owner: str,
    candidates: Sequence[Candidate],
    params: RegenerationParams,
    rng: np.random.Generator,
    load: Optional[Mapping[str, int]] = None,
    size: Optional[int] = None,
) -> QuorumSlice:
    """Build one slice for ``owner`` from an eligible candidate pool.

    Organizations are visited round-robin in an order shuffled by ``rng``;
    inside each organization the least-used candidate comes first (``load``
    counts slice memberships handed out so far in this attempt), then the
    most reputable. If the mean falls short of ``r_avg``, low members are
    swapped for the most reputable outsiders, keeping the first pick (the
    coverage anchor) where possible.
    """
    pool = _Pool(candidates, params)
    pool.check(owner)
    if size is None:
        size = target_size(pool.org_sizes(), params)
    picked = pool.build(owner, rng, load or {}, size)
    return QuorumSlice(owner, frozenset(c.id for c in picked))


def candidate_pool(
    snapshot: NetworkSnapshot,
    reputation: Mapping[str, ReputationState],
    active: frozenset[str],
) -> list[Candidate]:
    return [Candidate(v, snapshot.validators[v].org, reputation[v].score) for v in sorted(active)]


def minimum_active(snapshot: NetworkSnapshot, params: RegenerationParams) -> int:
    if params.min_active is not None:
        return params.min_active
    return byzantine_bound(max(snapshot.n, 1)) + 1


def regenerate(
    snapshot: NetworkSnapshot,
    reputation: Mapping[str, ReputationState],
    params: RegenerationParams,
    active: Optional[frozenset[str]] = None,
) -> RegenerationResult:
    """Rebuild every active validator's slice until the graph is one SCC.

    Attempt ``k`` draws from its own stream seeded by ``(params.seed, k)``,
    so the outcome is a pure function of the inputs.
    """
    if active is None:
        active = active_set(snapshot, {k: s.category for k, s in reputation.items()})
    if not active:
        raise NoActiveValidators("no active validators to build slices for")

    floor = minimum_active(snapshot, params)
    if len(active) < floor:
        return RegenerationResult(
            False, 0, {}, True, f"{len(active)} active validators below the certifiable minimum {floor}"
        )

    pool = _Pool(candidate_pool(snapshot, reputation, active), params)
    size = target_size(pool.org_sizes(), params)
    owners = [c.id for c in pool.all]
    try:
        for owner in owners:
            pool.check(owner)
    except SliceError as exc:
        # pool-determined: no attempt can do better
        return RegenerationResult(False, 0, {}, True, str(exc))

    for attempt in range(params.max_attempts):
        rng = np.random.default_rng([params.seed, attempt])
        load = dict.fromkeys(owners, 0)
        slices: dict[str, QuorumSlice] = {}
        for i in rng.permutation(len(owners)):
            owner = owners[i]
            sl = QuorumSlice(owner, frozenset(c.id for c in pool.build(owner, rng, load, size)))
            for m in sl.members:
                load[m] += 1
            slices[owner] = sl
        if scc(build_graph(slices, active)).component_count == 1:
            return RegenerationResult(True, attempt + 1, slices, False, "")
    return RegenerationResult(
        False, params.max_attempts, {}, True, f"no strongly connected configuration in {params.max_attempts} attempts"
    )


def slice_violations(
    sl: QuorumSlice,
    snapshot: NetworkSnapshot,
    scores: Mapping[str, float],
    params: RegenerationParams,
) -> list[str]:
    """Independent post-hoc check of the three validity criteria."""
    out = []
    k = len(sl.members)
    if not params.slice_min <= k <= params.slice_max:
        out.append(f"size {k} outside [{params.slice_min}, {params.slice_max}]")
    orgs = {snapshot.validators[m].org for m in sl.members}
    if len(orgs) < params.min_orgs:
        out.append(f"{len(orgs)} organizations < {params.min_orgs}")
    if k and sum(scores[m] for m in sl.members) / k < params.r_avg:
        out.append("mean reputation below r_avg")
    if sl.owner in sl.members:
        out.append("owner in its own slice")
    return out
