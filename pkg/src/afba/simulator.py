"""Deterministic round-based consensus simulation with fault injection.

A round applies the scheduled faults, repairs the topology if the quorum
graph is no longer one strongly connected component, runs a simplified
federated ratification, takes the plurality value as the round's majority,
emits one agreement bit per validator and feeds the reputation engine. A node
newly blacklisted by that update triggers another regeneration.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import AbstractSet, Hashable, Mapping, Optional, Sequence

import numpy as np

from afba.fallback import CoreParams, PoolTooSmall, engage_core
from afba.model import NetworkSnapshot, QuorumSlice, Status, active_set
from afba.quorum import build_graph, scc
from afba.regen import (
    NoActiveValidators,
    RegenerationParams,
    RegenerationResult,
    RegenerationTrigger,
    TriggerKind,
    detect_trigger,
    regenerate,
)
from afba.reputation import (
    EigenTrustNotConverged,
    ReputationParams,
    TrustCategory,
    agreement_bit,
    eigentrust,
    ingest_round,
    initial_state,
    readmit,
)


class BehaviorKind(enum.Enum):
    HONEST = "Honest"
    BYZANTINE_FLIP = "ByzantineFlip"
    SILENT = "Silent"
    CRASHED = "Crashed"


@dataclass(frozen=True)
class BehaviorProfile:
    kind: BehaviorKind = BehaviorKind.HONEST
    p: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("flip probability must lie in [0, 1]")


HONEST = BehaviorProfile()


class FaultAction(enum.Enum):
    CRASH = "Crash"
    RECOVER = "Recover"
    SET_PROFILE = "SetProfile"
    MARK_OVERLOADED = "MarkOverloaded"


@dataclass(frozen=True)
class FaultEvent:
    """A scheduled fault; ``target`` names one node, ``fraction`` picks round(fraction * n) at random."""

    round: int
    action: FaultAction
    target: Optional[str] = None
    fraction: Optional[float] = None
    count: Optional[int] = None
    profile: Optional[BehaviorProfile] = None

    def __post_init__(self):
        if self.round < 0:
            raise ValueError("fault round must be >= 0")
        given = [x is not None for x in (self.target, self.fraction, self.count)]
        if sum(given) != 1:
            raise ValueError("a fault needs exactly one of target, fraction, count")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction selectors must lie in (0, 1]")
        if self.action is FaultAction.SET_PROFILE and self.profile is None:
            raise ValueError("SetProfile needs a profile")


class Mode(enum.Enum):
    ADAPTIVE = "Adaptive"
    CORE = "Core"


@dataclass(frozen=True)
class ScenarioConfig:
    snapshot: NetworkSnapshot
    seed: int = 0
    rounds: int = 100
    reputation: ReputationParams = field(default_factory=ReputationParams)
    regen: RegenerationParams = field(default_factory=RegenerationParams)
    core: CoreParams = field(default_factory=CoreParams)
    faults: tuple[FaultEvent, ...] = ()
    behaviors: Mapping[str, BehaviorProfile] = field(default_factory=dict)
    # False freezes the initial slices: no regeneration and no core fallback
    regeneration: bool = True
    core_retry_every: int = 10

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        late = [f.round for f in self.faults if f.round > self.rounds]
        if late:
            raise ValueError(f"fault scheduled after the last round: {late}")
        unknown = [f.target for f in self.faults if f.target is not None and f.target not in self.snapshot.validators]
        unknown += [k for k in self.behaviors if k not in self.snapshot.validators]
        if unknown:
            raise ValueError(f"unknown validator ids in scenario: {sorted(unknown)[:5]}")


@dataclass(frozen=True)
class RoundResult:
    round: int
    proposal: str
    majority_value: Optional[str]
    values: Mapping[str, Optional[str]]
    bits: Mapping[str, int]
    scc_count: int
    mode: Mode
    regeneration_attempts: int

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "proposal": self.proposal,
            "majority_value": self.majority_value,
            "scc_count": self.scc_count,
            "mode": self.mode.value,
            "regeneration_attempts": self.regeneration_attempts,
            "values": dict(sorted(self.values.items())),
            "bits": dict(sorted(self.bits.items())),
        }


def majority_value(
    externalized: Mapping[str, Optional[Hashable]],
    active: AbstractSet[str],
) -> Optional[Hashable]:
    """Plurality value among ``active`` nodes; ties go to the smallest value."""
    counts = Counter(v for node, v in externalized.items() if v is not None and node in active)
    if not counts:
        return None
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


class Simulation:
    """Mutable state of one scenario run; call :meth:`run_round` repeatedly."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.snapshot = config.snapshot
        self.params = config.reputation
        self.round = 0
        self.mode = Mode.ADAPTIVE
        self.core_entered: Optional[int] = None
        self.events: list[dict] = []
        self.results: list[RoundResult] = []
        self.profiles = {v: HONEST for v in self.snapshot.validators}
        for node, prof in config.behaviors.items():
            self.profiles[node] = prof
        for node, v in self.snapshot.validators.items():
            if v.status is Status.BYZANTINE and node not in config.behaviors:
                self.profiles[node] = BehaviorProfile(BehaviorKind.BYZANTINE_FLIP, 1.0)
        self.reputation = {
            v.id: initial_state(v.id, self.params, baseline=v.uptime) for v in self.snapshot.validators.values()
        }
        self._order = sorted(self.snapshot.validators)
        self._index = {v: i for i, v in enumerate(self._order)}
        self._coagree = np.zeros((len(self._order), len(self._order)))
        self.slices: dict[str, QuorumSlice] = dict(self.snapshot.slices)
        self.regenerations = 0
        self.regeneration_attempts = 0
        self.fallbacks = 0
        if not self.slices:
            self._initial_slices()

    # -- topology ---------------------------------------------------------

    def categories(self) -> dict[str, TrustCategory]:
        return {k: s.category for k, s in self.reputation.items()}

    def adaptive_nodes(self) -> frozenset[str]:
        return active_set(self.snapshot, self.categories())

    def live_nodes(self) -> frozenset[str]:
        return frozenset(k for k, v in self.snapshot.validators.items() if v.status is Status.ACTIVE)

    def participants(self) -> frozenset[str]:
        return self.live_nodes() if self.mode is Mode.CORE else self.adaptive_nodes()

    def _event(self, kind: str, **data) -> None:
        self.events.append({"round": self.round, "event": kind, **data})

    def _stream(self, *tags: int) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, self.round, *tags])

    def _initial_slices(self) -> None:
        params = replace(self.config.regen, seed=int(self._stream(0).integers(2**63)))
        try:
            res = regenerate(self.snapshot, self.reputation, params, self.adaptive_nodes())
        except NoActiveValidators:
            self._event("initial_slices", connected=False, attempts=0, fallback=False)
            return
        self._event("initial_slices", connected=res.connected, attempts=res.attempts_used, fallback=res.fallback_engaged)
        if res.connected:
            self.slices = dict(res.slices)
        elif self.config.regeneration:
            self._engage_core()
        else:
            self.slices = {}

    def _regenerate(self, trigger: Optional[RegenerationTrigger], tag: int) -> RegenerationResult:
        params = replace(self.config.regen, seed=int(self._stream(tag).integers(2**63)))
        active = self.adaptive_nodes()
        if active:
            res = regenerate(self.snapshot, self.reputation, params, active)
        else:
            res = RegenerationResult(False, 0, {}, True, "no active validators")
        self.regenerations += 1
        self.regeneration_attempts += res.attempts_used
        self._event(
            "regeneration",
            trigger=trigger.kind.value if trigger else "CoreRetry",
            connected=res.connected,
            attempts=res.attempts_used,
            fallback=res.fallback_engaged,
            reason=res.reason,
        )
        return res

    def _engage_core(self) -> None:
        live = self.live_nodes()
        core = replace(self.config.core, seed=int(self._stream(7).integers(2**63)))
        try:
            result = engage_core(live, core)
        except PoolTooSmall as exc:
            self._event("core_unavailable", reason=str(exc))
            self.slices = {}
        else:
            self.slices = dict(result.slices)
            self._event("core_engaged", s=result.s_effective, scc_count=result.report.component_count)
        if self.mode is not Mode.CORE:
            self.fallbacks += 1
            self.core_entered = self.round
        self.mode = Mode.CORE

    def _repair(self, trigger: RegenerationTrigger, tag: int) -> int:
        """Handle a trigger; returns the number of regeneration attempts spent."""
        self._event("trigger", trigger=trigger.kind.value, size=len(trigger.detail))
        if self.mode is Mode.CORE:
            if trigger.kind is TriggerKind.STRUCTURAL_FAILURE:
                self._engage_core()
            return 0
        res = self._regenerate(trigger, tag)
        if res.connected:
            self.slices = dict(res.slices)
        else:
            self._engage_core()
        return res.attempts_used

    def _core_retry(self) -> int:
        res = self._regenerate(None, 3)
        if res.connected:
            self.slices = dict(res.slices)
            self.mode = Mode.ADAPTIVE
            self.core_entered = None
            self._event("core_exit")
        return res.attempts_used

    # -- faults -----------------------------------------------------------

    def _apply_faults(self, rng: np.random.Generator) -> None:
        for fault in self.config.faults:
            if fault.round != self.round:
                continue
            live = sorted(self.live_nodes())
            if fault.action is FaultAction.RECOVER:
                pool = sorted(k for k, v in self.snapshot.validators.items() if v.status is Status.CRASHED)
            else:
                pool = live
            if fault.target is not None:
                targets = [fault.target]
            else:
                k = fault.count if fault.count is not None else int(round(fault.fraction * self.snapshot.n))
                k = min(k, len(pool))
                targets = sorted(pool[i] for i in rng.choice(len(pool), size=k, replace=False)) if k else []
            self._apply(fault, targets)
            self._event("fault", action=fault.action.value, targets=len(targets))

    def _apply(self, fault: FaultEvent, targets: Sequence[str]) -> None:
        if fault.action is FaultAction.CRASH:
            self.snapshot = self.snapshot.with_status(targets, Status.CRASHED)
        elif fault.action is FaultAction.RECOVER:
            self.snapshot = self.snapshot.with_status(targets, Status.ACTIVE)
        elif fault.action is FaultAction.SET_PROFILE:
            if fault.profile.kind is BehaviorKind.CRASHED:
                self.snapshot = self.snapshot.with_status(targets, Status.CRASHED)
            for t in targets:
                self.profiles[t] = fault.profile
        elif fault.action is FaultAction.MARK_OVERLOADED:
            validators = dict(self.snapshot.validators)
            for t in targets:
                validators[t] = replace(validators[t], overloaded=True)
            self.snapshot = replace(self.snapshot, validators=validators)

    # -- consensus --------------------------------------------------------

    def _ratify(self, proposal: str, nodes: frozenset[str], rng: np.random.Generator) -> dict[str, Optional[str]]:
        order = sorted(nodes)
        draws = rng.random(len(order))
        signal: dict[str, Optional[str]] = {}
        honest: list[str] = []
        for node, u in zip(order, draws):
            prof = self.profiles[node]
            if prof.kind in (BehaviorKind.SILENT, BehaviorKind.CRASHED):
                signal[node] = None
            elif prof.kind is BehaviorKind.BYZANTINE_FLIP and u < prof.p:
                signal[node] = f"{proposal}~{node}"
            else:
                signal[node] = proposal
                honest.append(node)

        values: dict[str, Optional[str]] = {
            n: (v if v is not None and v != proposal else None) for n, v in signal.items()
        }
        accepted: set[str] = set()
        for _ in range(len(order)):
            changed = False
            for node in honest:
                if node in accepted:
                    continue
                sl = self.slices.get(node)
                live = [m for m in sl.members if m in nodes] if sl else []
                if not live:
                    continue
                agree = sum(1 for m in live if m in accepted or signal[m] == proposal)
                if 2 * agree > len(live):
                    accepted.add(node)
                    changed = True
            if not changed:
                break
        for node in accepted:
            values[node] = proposal
        return values

    # -- round ------------------------------------------------------------

    def run_round(self, proposal: Optional[str] = None) -> RoundResult:
        self.round += 1
        rng = self._stream(1)
        if proposal is None:
            proposal = f"{int(rng.integers(16**8)):08x}"
        self._apply_faults(rng)

        attempts = 0
        adaptive = self.config.regeneration
        if adaptive and self.mode is Mode.CORE and (self.round - self.core_entered) % self.config.core_retry_every == 0:
            attempts += self._core_retry()
        nodes = self.participants()
        report = scc(build_graph(self.slices, nodes))
        if adaptive and report.component_count != 1 and nodes:
            attempts += self._repair(RegenerationTrigger(TriggerKind.STRUCTURAL_FAILURE, report.components), 4)
            nodes = self.participants()
            report = scc(build_graph(self.slices, nodes))

        values = self._ratify(proposal, nodes, rng)
        eligible = self.adaptive_nodes()
        majority = majority_value(values, eligible)

        previous = self.reputation
        bits = {}
        for node in self._order:
            bits[node] = 0 if majority is None else agreement_bit(values.get(node), majority)
        self.reputation = {n: ingest_round(previous[n], bits[n], self.params) for n in self._order}
        vec = np.array([bits[n] for n in self._order], dtype=float)
        self._coagree += np.outer(vec, vec)

        if self.round % self.params.eigentrust_every == 0:
            self._refresh_baselines()

        if adaptive and self.mode is Mode.ADAPTIVE:
            now = self.adaptive_nodes()
            trigger = detect_trigger(build_graph(self.slices, now), self.reputation, previous)
            if trigger is not None and trigger.kind is TriggerKind.TRUST_DEGRADATION:
                attempts += self._repair(trigger, 5)

        result = RoundResult(
            round=self.round,
            proposal=proposal,
            majority_value=majority,
            values={n: values.get(n) for n in self._order},
            bits=bits,
            scc_count=report.component_count,
            mode=self.mode,
            regeneration_attempts=attempts,
        )
        self.results.append(result)
        return result

    def _refresh_baselines(self) -> None:
        try:
            trust = eigentrust(
                self._coagree, damping=self.params.damping, epsilon=self.params.epsilon, max_iters=self.params.max_iters
            )
        except EigenTrustNotConverged as exc:
            self._event("eigentrust_failed", reason=str(exc))
            return
        top = trust.max()
        scaled = trust / top if top > 0 else trust
        live = self.live_nodes()
        readmitted = []
        for node, value in zip(self._order, scaled):
            st = replace(self.reputation[node], eigentrust_baseline=float(value))
            if st.category is TrustCategory.BLACKLISTED and node in live:
                back = readmit(st, self.params)
                if back is not None:
                    st = back
                    readmitted.append(node)
            self.reputation[node] = st
        self._event("eigentrust_refresh", readmitted=readmitted)


@dataclass(frozen=True)
class ScenarioOutcome:
    events: list[dict]
    rounds: list[RoundResult]
    summary: dict


def summarize(sim: Simulation) -> dict:
    results = sim.results
    first_fault = min((f.round for f in sim.config.faults), default=None)
    post = [r for r in results if first_fault is None or r.round >= first_fault]

    def rate(rs, pred):
        return sum(1 for r in rs if pred(r)) / len(rs) if rs else 1.0

    census = Counter(s.category.value for s in sim.reputation.values())
    return {
        "rounds": len(results),
        "connectivity_success_rate": rate(results, lambda r: r.scc_count == 1),
        "post_fault_connectivity_rate": rate(post, lambda r: r.scc_count == 1),
        "majority_rate": rate(results, lambda r: r.majority_value is not None),
        "post_fault_majority_rate": rate(post, lambda r: r.majority_value is not None),
        "regeneration_events": sim.regenerations,
        "regeneration_attempts": sim.regeneration_attempts,
        "fallback_engagements": sim.fallbacks,
        "rounds_in_core": sum(1 for r in results if r.mode is Mode.CORE),
        "post_fault_rounds_in_core": sum(1 for r in post if r.mode is Mode.CORE),
        "first_fault_round": first_fault,
        "final_mode": sim.mode.value,
        "final_census": {c.value: census.get(c.value, 0) for c in TrustCategory},
    }


def run_scenario(config: ScenarioConfig) -> ScenarioOutcome:
    sim = Simulation(config)
    for _ in range(config.rounds):
        sim.run_round()
    return ScenarioOutcome(sim.events, sim.results, summarize(sim))
