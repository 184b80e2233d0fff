# A full scenario: crash 62% of the network mid-run, then shrink it to three.

# %%
from afba.ingest import synthesize_fixture
from afba.simulator import BehaviorKind, BehaviorProfile, FaultAction, FaultEvent, ScenarioConfig, run_scenario

snap = synthesize_fixture(24, total=74, seed=0)
flipper = sorted(snap.validators)[0]

faults = (
    FaultEvent(10, FaultAction.CRASH, fraction=0.62),
    FaultEvent(30, FaultAction.CRASH, count=25),
)
cfg = ScenarioConfig(
    snap,
    seed=1,
    rounds=45,
    faults=faults,
    behaviors={flipper: BehaviorProfile(BehaviorKind.BYZANTINE_FLIP, 0.5)},
)
out = run_scenario(cfg)

# %% what happened, event by event
for e in out.events:
    if e["event"] in ("fault", "regeneration", "core_engaged", "core_exit"):
        print(e)

# %% per-round view around the faults; survivors whose old slices still close a
# cycle keep running adaptively until the next trigger
for r in out.rounds:
    if r.round in (9, 10, 11, 29, 30, 31, 45):
        agree = sum(r.bits.values())
        print(f"round {r.round:2d}: mode={r.mode.value:8s} scc={r.scc_count} agreeing={agree}")

# %%
for k in ("post_fault_connectivity_rate", "post_fault_majority_rate", "fallback_engagements", "final_mode"):
    print(k, out.summary[k])
print(out.summary["final_census"])
