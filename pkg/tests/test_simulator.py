import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afba.reputation import ReputationParams
from afba.simulator import (
    BehaviorKind,
    BehaviorProfile,
    FaultAction,
    FaultEvent,
    Mode,
    ScenarioConfig,
    Simulation,
    majority_value,
    run_scenario,
)
from conftest import make_snapshot

FLIP = BehaviorProfile(BehaviorKind.BYZANTINE_FLIP, 1.0)


def five_node():
    nodes = ["a", "b", "c", "d", "e"]
    slices = {v: [u for u in nodes if u != v] for v in nodes}
    return make_snapshot({f"o{v}": [v] for v in nodes}, slices)


def test_majority_value_plurality_and_ties():
    assert majority_value({"a": "x", "b": "x", "c": "y"}, frozenset("abc")) == "x"
    assert majority_value({"a": "y", "b": "x"}, frozenset("ab")) == "x"
    assert majority_value({"a": "y", "b": "x", "c": "y"}, frozenset("ab")) == "x"
    assert majority_value({"a": None}, frozenset("a")) is None


def test_byzantine_flip_hand_trace():
    # e flips every round; each honest node sees 3 of 4 slice members signal
    # the proposal, a strict majority, so all four accept it
    sim = Simulation(ScenarioConfig(five_node(), rounds=1, behaviors={"e": FLIP}))
    r = sim.run_round(proposal="P")
    assert r.values == {"a": "P", "b": "P", "c": "P", "d": "P", "e": "P~e"}
    assert r.majority_value == "P"
    assert r.bits == {"a": 1, "b": 1, "c": 1, "d": 1, "e": 0}
    assert r.scc_count == 1 and r.mode is Mode.ADAPTIVE


def test_flipper_blacklisted_on_first_disagreement_then_excluded():
    # a one-bit window holding a 0 scores 0.0, below theta3
    out = run_scenario(ScenarioConfig(five_node(), rounds=8, behaviors={"e": FLIP}))
    kinds = [(e["round"], e["event"], e.get("trigger"), e.get("connected")) for e in out.events]
    assert (1, "regeneration", "TrustDegradation", True) in kinds
    assert out.summary["final_census"]["Blacklisted"] == 1
    assert out.summary["final_mode"] == "Adaptive"
    assert all(r.majority_value == r.proposal for r in out.rounds)
    assert all(r.values["e"] is None for r in out.rounds[1:])


def test_silent_node_scores_zero():
    sim = Simulation(ScenarioConfig(five_node(), behaviors={"c": BehaviorProfile(BehaviorKind.SILENT)}))
    r = sim.run_round(proposal="P")
    assert r.values["c"] is None and r.bits["c"] == 0 and r.bits["a"] == 1


def test_crashed_slices_isolate_then_regenerate(fixture74):
    cfg = ScenarioConfig(fixture74, seed=1, rounds=12, faults=(FaultEvent(10, FaultAction.CRASH, count=30),))
    out = run_scenario(cfg)
    assert any(e["event"] == "regeneration" and e["trigger"] == "StructuralFailure" for e in out.events)
    assert out.summary["post_fault_connectivity_rate"] == 1.0
    assert out.rounds[-1].mode is Mode.ADAPTIVE


def test_crash_62_percent_at_round_50(fixture74):
    cfg = ScenarioConfig(fixture74, seed=0, rounds=60, faults=(FaultEvent(50, FaultAction.CRASH, fraction=0.62),))
    out = run_scenario(cfg)
    assert out.summary["post_fault_connectivity_rate"] == 1.0
    assert out.summary["post_fault_majority_rate"] == 1.0
    census = out.summary["final_census"]
    assert census["Blacklisted"] == 46


def test_three_survivors_run_in_core(fixture74):
    cfg = ScenarioConfig(fixture74, seed=2, rounds=20, faults=(FaultEvent(5, FaultAction.CRASH, count=71),))
    out = run_scenario(cfg)
    post = [r for r in out.rounds if r.round >= 5]
    assert all(r.mode is Mode.CORE for r in post)
    assert all(r.majority_value is not None for r in post)
    assert all(r.scc_count == 1 for r in post)
    assert any(e["event"] == "core_engaged" and e["s"] == 2 for e in out.events)


def test_core_retry_returns_to_adaptive(fixture74):
    faults = (
        FaultEvent(3, FaultAction.CRASH, count=60),
        FaultEvent(4, FaultAction.RECOVER, count=60),
    )
    cfg = ScenarioConfig(fixture74, seed=4, rounds=40, faults=faults, core_retry_every=5)
    out = run_scenario(cfg)
    assert any(e["event"] == "core_exit" for e in out.events)
    assert out.summary["fallback_engagements"] >= 1


def test_static_control_never_regenerates(fixture74):
    cfg = ScenarioConfig(
        fixture74, seed=0, rounds=10, regeneration=False, faults=(FaultEvent(5, FaultAction.CRASH, fraction=0.5),)
    )
    out = run_scenario(cfg)
    assert out.summary["regeneration_events"] == 0
    assert out.summary["post_fault_connectivity_rate"] == 0.0


def test_readmission_after_eigentrust_refresh():
    snap = five_node()
    faults = (
        FaultEvent(1, FaultAction.SET_PROFILE, target="e", profile=FLIP),
        FaultEvent(6, FaultAction.SET_PROFILE, target="e", profile=BehaviorProfile()),
    )
    params = ReputationParams(eigentrust_every=20, readmission_floor=0.1)
    out = run_scenario(ScenarioConfig(snap, rounds=20, reputation=params, faults=faults))
    refresh = [e for e in out.events if e["event"] == "eigentrust_refresh"]
    assert refresh and refresh[0]["readmitted"] == ["e"]


def test_config_validation(fixture74):
    with pytest.raises(ValueError):
        ScenarioConfig(fixture74, rounds=5, faults=(FaultEvent(9, FaultAction.CRASH, count=1),))
    with pytest.raises(ValueError):
        ScenarioConfig(fixture74, faults=(FaultEvent(1, FaultAction.CRASH, target="nobody"),))
    with pytest.raises(ValueError):
        FaultEvent(1, FaultAction.CRASH, count=1, fraction=0.5)
    with pytest.raises(ValueError):
        BehaviorProfile(BehaviorKind.BYZANTINE_FLIP, 1.5)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.05, 0.9))
def test_runs_are_deterministic(seed, fraction):
    snap = make_snapshot({f"o{i}": [f"v{i}{j}" for j in range(3)] for i in range(5)})
    cfg = ScenarioConfig(snap, seed=seed, rounds=15, faults=(FaultEvent(4, FaultAction.CRASH, fraction=fraction),))
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.events == b.events and a.summary == b.summary
    assert [r.to_dict() for r in a.rounds] == [r.to_dict() for r in b.rounds]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_round_invariants(seed):
    snap = make_snapshot({f"o{i}": [f"v{i}{j}" for j in range(3)] for i in range(4)})
    behaviors = {"v00": BehaviorProfile(BehaviorKind.BYZANTINE_FLIP, 0.5)}
    out = run_scenario(ScenarioConfig(snap, seed=seed, rounds=12, behaviors=behaviors))
    for r in out.rounds:
        assert set(r.bits) == set(snap.validators)
        for node, bit in r.bits.items():
            assert bit == int(r.majority_value is not None and r.values[node] == r.majority_value)
