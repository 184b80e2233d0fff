# Regenerating slices for a 74-validator, 24-organization network.

# %%
from collections import Counter

from afba.ingest import synthesize_fixture
from afba.model import Status
from afba.quorum import build_graph, scc
from afba.regen import RegenerationParams, regenerate, slice_violations
from afba.reputation import ReputationParams, initial_state

snap = synthesize_fixture(24, total=74, seed=0)
rp = ReputationParams()
states = {v: initial_state(v, rp) for v in snap.validators}
params = RegenerationParams(r_avg=0.56)

# %% healthy network: one attempt is enough
res = regenerate(snap, states, params)
print("connected:", res.connected, "attempts:", res.attempts_used, "slices:", len(res.slices))
print("slice sizes:", dict(sorted(Counter(len(s.members) for s in res.slices.values()).items())))
scores = {v: s.score for v, s in states.items()}
print("criteria violations:", sum(len(slice_violations(s, snap, scores, params)) for s in res.slices.values()))

# %% crash validators until regeneration gives up
for survivors in (40, 27, 25, 24, 20):
    down = sorted(snap.validators)[survivors:]
    damaged = snap.with_status(down, Status.CRASHED)
    r = regenerate(damaged, states, params)
    print(f"{survivors:3d} survivors -> connected={r.connected} fallback={r.fallback_engaged} {r.reason}")

# %% the accepted configuration really is one SCC
active = frozenset(snap.validators)
print("scc count:", scc(build_graph(res.slices, active)).component_count)
