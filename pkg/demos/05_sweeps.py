# Small versions of the four sweeps. The CLI runs the full grids:
#   afba sweep --kind reputation --out results/

# %%
from afba.experiments import SweepSpec, results_csv, run_sweep

# %% reputation threshold: where does the slice criterion become unsatisfiable?
res = run_sweep(SweepSpec("reputation", grid=[0.3, 0.58, 0.8, 0.86, 0.9, 0.95], seeds=5))
print(results_csv(res))

# %% organization size, half the validators down
print(results_csv(run_sweep(SweepSpec("orgsize", grid=[1, 2, 3, 4, 6], seeds=10))))

# %% survivors after a crash at round 5
res = run_sweep(SweepSpec("failures", grid=[74, 40, 27, 26, 25, 24, 10, 3], seeds=3))
print(results_csv(res))
print("transition point:", res.extra["transition_point"])

# %% growth, one organization at a time
print(results_csv(run_sweep(SweepSpec("growth", seeds=3))))
