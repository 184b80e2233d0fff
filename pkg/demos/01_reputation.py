# Reputation on two timescales: a sliding window of agreement bits, and an
# EigenTrust baseline that decides readmission.

# %%
import numpy as np

from afba.reputation import ReputationParams, TrustCategory, eigentrust, ingest_round, initial_state, readmit

params = ReputationParams()  # N=10, thresholds .85/.70/.30
state = initial_state("v1", params)
print("warm-up:", state.score, state.category.value)

# %% a reliable validator climbs to Trusted
for _ in range(10):
    state = ingest_round(state, 1, params)
print("after 10 agreements:", state.score, state.category.value)

# %% five misses in a row blacklist it even though the window mean is still 0.5
for i in range(5):
    state = ingest_round(state, 0, params)
    print(f"  miss {i + 1}: score={state.score:.1f} streak={state.disagree_streak} {state.category.value}")

# %% the long-term view: co-agreement counts between four validators
coagree = np.array(
    [
        [0, 40, 38, 2],
        [40, 0, 39, 3],
        [38, 39, 0, 1],
        [2, 3, 1, 0],
    ],
    dtype=float,
)
trust = eigentrust(coagree)
print("global trust:", np.round(trust, 3))

# %% scale so the best-trusted node is 1.0 and try readmission at floor 0.5
from dataclasses import replace

baseline = float(trust[0] / trust.max())
back = readmit(replace(state, eigentrust_baseline=baseline), params)
print("readmitted as:", back.category.value if back else None)
assert back is None or back.category is TrustCategory.COOLDOWN
