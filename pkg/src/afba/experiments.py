"""Parameter sweeps over the regeneration model and their CSV/JSON output.

Every grid point is run once per seed and each (point, seed) pair is
independent, so results are plain seed averages and reproduce byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np

from afba.fallback import CoreParams
from afba.ingest import (
    add_organization,
    load_snapshot,
    replay_round_log,
    parse_round_log_lines,
    emit_round_log,
    snapshot_from_dict,
    synthesize_fixture,
    synthesize_round_log,
)
from afba.model import NetworkSnapshot, Status
from afba.regen import RegenerationParams, regenerate
from afba.reputation import ReputationParams, initial_state
from afba.simulator import (
    BehaviorKind,
    BehaviorProfile,
    FaultAction,
    FaultEvent,
    ScenarioConfig,
    run_scenario,
)

KINDS = ("reputation", "orgsize", "failures", "growth")
SEED_ENV = "AFBA_SEED"

GROWTH_COLUMNS = ["Added_Org_Members", "Total_Organizations", "Total_Nodes", "Connected", "Slices_Formed"]


def env_seed() -> Optional[int]:
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw not in (None, "") else None


@dataclass
class SweepSpec:
    kind: str
    grid: list = field(default_factory=list)
    seeds: int = 20
    seed: int = 0
    base: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sweep kind {self.kind!r}; expected one of {KINDS}")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if not self.grid:
            self.grid = default_grid(self.kind, self.base)
        if not self.grid:
            raise ValueError("sweep grid is empty")

    def seed_values(self) -> list[int]:
        return [self.seed + i for i in range(self.seeds)]


@dataclass
class SweepResult:
    kind: str
    columns: list[str]
    rows: list[dict]
    spec: dict
    extra: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]


def default_grid(kind: str, base: Mapping) -> list:
    if kind == "reputation":
        return [round(0.02 * i, 2) for i in range(51)]
    if kind == "orgsize":
        return list(range(1, 11))
    if kind == "failures":
        n = base_snapshot(base).n
        return list(range(n, 1, -1))
    return [3, 5, 7, 9, 11, 13, 15]


# -- configuration ----------------------------------------------------------


def _params(cls, doc: Optional[Mapping]):
    doc = dict(doc or {})
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**doc)


def snapshot_from_spec(spec, base_dir: Optional[Path] = None) -> NetworkSnapshot:
    """``spec`` is a path, an inline snapshot document, or ``{"fixture": {...}}``."""
    if isinstance(spec, (str, os.PathLike)):
        path = Path(spec)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_snapshot(path)
    if isinstance(spec, Mapping) and "fixture" in spec:
        fx = dict(spec["fixture"])
        return synthesize_fixture(
            fx.pop("orgs"), total=fx.pop("total", None), members_per_org=fx.pop("members_per_org", None), seed=fx.pop("seed", 0)
        )
    if isinstance(spec, Mapping):
        return snapshot_from_dict(spec)
    raise ValueError("snapshot must be a path, a snapshot document or a fixture spec")


def base_snapshot(base: Mapping, base_dir: Optional[Path] = None) -> NetworkSnapshot:
    if "snapshot" in base:
        return snapshot_from_spec(base["snapshot"], base_dir)
    fx = dict(base.get("fixture", {}))
    return synthesize_fixture(fx.get("orgs", 24), total=fx.get("total", 74), seed=fx.get("seed", 0))


def _profile(doc: Mapping) -> BehaviorProfile:
    return BehaviorProfile(BehaviorKind(doc["kind"]), float(doc.get("p", 0.0)))


def scenario_from_dict(doc: Mapping, base_dir: Optional[Path] = None, seed: Optional[int] = None) -> ScenarioConfig:
    """Build a scenario; precedence for the seed is ``seed`` > ``AFBA_SEED`` > document."""
    if "snapshot" not in doc:
        raise ValueError("scenario needs a 'snapshot'")
    snap = snapshot_from_spec(doc["snapshot"], base_dir)
    faults = []
    for f in doc.get("faults", ()):
        faults.append(
            FaultEvent(
                round=int(f["round"]),
                action=FaultAction(f["action"]),
                target=f.get("target"),
                fraction=f.get("fraction"),
                count=f.get("count"),
                profile=_profile(f["profile"]) if "profile" in f else None,
            )
        )
    chosen = seed if seed is not None else env_seed()
    return ScenarioConfig(
        snapshot=snap,
        seed=chosen if chosen is not None else int(doc.get("seed", 0)),
        rounds=int(doc.get("rounds", 100)),
        reputation=_params(ReputationParams, doc.get("reputation")),
        regen=_params(RegenerationParams, doc.get("regen")),
        core=_params(CoreParams, doc.get("core")),
        faults=tuple(faults),
        behaviors={k: _profile(v) for k, v in doc.get("behaviors", {}).items()},
        regeneration=bool(doc.get("regeneration", True)),
        core_retry_every=int(doc.get("core_retry_every", 10)),
    )


def sweep_spec_from_dict(doc: Mapping, kind: Optional[str] = None, seeds: Optional[int] = None) -> SweepSpec:
    env = env_seed()
    return SweepSpec(
        kind=kind or doc["kind"],
        grid=list(doc.get("grid", [])),
        seeds=seeds if seeds is not None else int(doc.get("seeds", 20)),
        seed=env if env is not None else int(doc.get("seed", 0)),
        base=dict(doc.get("base", {})),
    )


# -- per-(point, seed) episodes ---------------------------------------------


def reliability_reputation(
    snapshot: NetworkSnapshot,
    params: ReputationParams,
    seed: int,
    alpha: float,
    beta: float,
    rounds: Optional[int] = None,
):
    """Reputation states from a synthetic round log.

    Each validator externalizes the round value with a reliability drawn from
    Beta(alpha, beta); the log is replayed through the reputation engine.
    """
    rng = np.random.default_rng([seed, 11])
    nodes = sorted(snapshot.validators)
    rel = dict(zip(nodes, rng.beta(alpha, beta, size=len(nodes))))
    records = synthesize_round_log(nodes, rel, rounds or params.window_n, seed=int(rng.integers(2**63)))
    groups = parse_round_log_lines(emit_round_log(records).splitlines())
    return replay_round_log(groups, params, nodes)


def _healthy(snapshot: NetworkSnapshot, params: ReputationParams):
    return {v: initial_state(v, params) for v in snapshot.validators}


def _threshold_episode(args) -> tuple:
    snap, rep_params, regen, point, seed, alpha, beta = args
    states = reliability_reputation(snap, rep_params, seed, alpha, beta)
    res = regenerate(snap, states, replace(regen, r_avg=point, seed=seed))
    return res.connected, res.attempts_used, res.fallback_engaged


def _orgsize_episode(args) -> tuple:
    orgs, size, rep_params, regen, failure_rate, seed = args
    snap = synthesize_fixture(orgs, members_per_org=size, seed=seed)
    rng = np.random.default_rng([seed, 13])
    nodes = sorted(snap.validators)
    crashed = [v for v, u in zip(nodes, rng.random(len(nodes))) if u < failure_rate]
    snap = snap.with_status(crashed, Status.CRASHED)
    states = _healthy(snap, rep_params)
    if len(crashed) == len(nodes):
        return False, 0, True
    res = regenerate(snap, states, replace(regen, seed=seed))
    return res.connected, res.attempts_used, res.fallback_engaged


def _failure_episode(args) -> tuple:
    snap, rep_params, regen, core, survivors, seed, rounds, fault_round = args
    faults = ()
    if survivors < snap.n:
        faults = (FaultEvent(fault_round, FaultAction.CRASH, count=snap.n - survivors),)
    cfg = ScenarioConfig(
        snapshot=snap, seed=seed, rounds=rounds, reputation=rep_params, regen=regen, core=core, faults=faults
    )
    out = run_scenario(cfg)
    post = [r for r in out.rounds if r.round >= fault_round]
    adaptive_ok = all(r.mode.value == "Adaptive" and r.scc_count == 1 for r in post)
    fallback = any(r.mode.value == "Core" for r in post)
    majority = sum(r.majority_value is not None for r in post) / len(post)
    connected = sum(r.scc_count == 1 for r in post) / len(post)
    return adaptive_ok, out.summary["regeneration_events"], fallback, majority, connected


def _run(fn: Callable, jobs: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _mean(xs) -> float:
    xs = list(xs)
    return float(sum(xs)) / len(xs) if xs else 0.0


def _spec_dict(spec: SweepSpec) -> dict:
    return asdict(spec)


def _common(base: Mapping):
    return (
        _params(ReputationParams, base.get("reputation")),
        _params(RegenerationParams, base.get("regen")),
        _params(CoreParams, base.get("core")),
    )


def sweep_reputation_threshold(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Success rate of regeneration per ``r_avg`` on a fixed fixture."""
    base = spec.base
    snap = base_snapshot(base)
    rep_params, regen, _ = _common(base)
    rel = base.get("reliability", {})
    alpha, beta = float(rel.get("alpha", 4.0)), float(rel.get("beta", 1.5))
    jobs = [(snap, rep_params, regen, float(p), s, alpha, beta) for p in spec.grid for s in spec.seed_values()]
    out = _run(_threshold_episode, jobs, workers)
    rows = []
    k = spec.seeds
    for i, p in enumerate(spec.grid):
        chunk = out[i * k : (i + 1) * k]
        rows.append(
            {
                "r_avg": float(p),
                "success_rate": _mean(c[0] for c in chunk),
                "mean_attempts": _mean(c[1] for c in chunk),
                "fallback_rate": _mean(c[2] for c in chunk),
            }
        )
    return SweepResult("reputation", ["r_avg", "success_rate", "mean_attempts", "fallback_rate"], rows, _spec_dict(spec))


def sweep_org_size(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Success rate per members-per-organization with a fixed organization count.

    Each validator independently fails with ``failure_rate`` before slices are
    rebuilt.
    """
    base = spec.base
    rep_params, regen, _ = _common(base)
    orgs = int(base.get("orgs", 10))
    failure_rate = float(base.get("failure_rate", 0.5))
    jobs = [(orgs, int(p), rep_params, regen, failure_rate, s) for p in spec.grid for s in spec.seed_values()]
    out = _run(_orgsize_episode, jobs, workers)
    rows = []
    k = spec.seeds
    for i, p in enumerate(spec.grid):
        chunk = out[i * k : (i + 1) * k]
        rows.append(
            {
                "members_per_org": int(p),
                "total_nodes": orgs * int(p),
                "success_rate": _mean(c[0] for c in chunk),
                "mean_attempts": _mean(c[1] for c in chunk),
                "fallback_rate": _mean(c[2] for c in chunk),
            }
        )
    cols = ["members_per_org", "total_nodes", "success_rate", "mean_attempts", "fallback_rate"]
    return SweepResult("orgsize", cols, rows, _spec_dict(spec))


def transition_point(survivors: Sequence[int], rates: Sequence[float]) -> Optional[int]:
    """Smallest survivor count above every count that ever failed (raw first failure, no interpolation)."""
    failing = [s for s, r in zip(survivors, rates) if r < 1.0]
    return max(failing) + 1 if failing else None


def sweep_validator_failures(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Crash validators mid-scenario down to each survivor count."""
    base = spec.base
    snap = base_snapshot(base)
    rep_params, regen, core = _common(base)
    rounds = int(base.get("rounds", 20))
    fault_round = int(base.get("fault_round", 5))
    jobs = [
        (snap, rep_params, regen, core, int(p), s, rounds, fault_round) for p in spec.grid for s in spec.seed_values()
    ]
    out = _run(_failure_episode, jobs, workers)
    rows = []
    k = spec.seeds
    for i, p in enumerate(spec.grid):
        chunk = out[i * k : (i + 1) * k]
        rows.append(
            {
                "survivors": int(p),
                "success_rate": _mean(c[0] for c in chunk),
                "mean_regenerations": _mean(c[1] for c in chunk),
                "fallback_rate": _mean(c[2] for c in chunk),
                "majority_rate": _mean(c[3] for c in chunk),
                "connectivity_rate": _mean(c[4] for c in chunk),
            }
        )
    cols = ["survivors", "success_rate", "mean_regenerations", "fallback_rate", "majority_rate", "connectivity_rate"]
    result = SweepResult("failures", cols, rows, _spec_dict(spec))
    result.extra["transition_point"] = transition_point(result.column("survivors"), result.column("success_rate"))
    return result


def growth_experiment(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Add one organization per step and rebuild slices for the grown network.

    The starting population is ``base_orgs`` organizations with
    ``base_total`` validators; each grid value is the size of the next
    organization added.
    """
    base = spec.base
    rep_params, regen, _ = _common(base)
    snap = synthesize_fixture(int(base.get("base_orgs", 23)), total=int(base.get("base_total", 71)), seed=spec.seed)
    rows = []
    success = []
    for added in spec.grid:
        snap = add_organization(snap, int(added), seed=spec.seed)
        states = _healthy(snap, rep_params)
        results = [regenerate(snap, states, replace(regen, seed=s)) for s in spec.seed_values()]
        ok = all(r.connected for r in results)
        success.append(_mean(r.connected for r in results))
        rows.append(
            {
                "Added_Org_Members": int(added),
                "Total_Organizations": len(snap.organizations),
                "Total_Nodes": snap.n,
                "Connected": "TRUE" if ok else "FALSE",
                "Slices_Formed": len(results[0].slices),
            }
        )
    result = SweepResult("growth", list(GROWTH_COLUMNS), rows, _spec_dict(spec))
    result.extra["success_rate"] = success
    return result


SWEEPS: dict[str, Callable[..., SweepResult]] = {
    "reputation": sweep_reputation_threshold,
    "orgsize": sweep_org_size,
    "failures": sweep_validator_failures,
    "growth": growth_experiment,
}


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    return SWEEPS[spec.kind](spec, workers=workers)


# -- output -----------------------------------------------------------------


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(round(value, 12))
    return str(value)


def results_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(result.columns)
    for row in result.rows:
        writer.writerow([_fmt(row[c]) for c in result.columns])
    return buf.getvalue()


def results_json(result: SweepResult) -> str:
    doc = {"kind": result.kind, "spec": result.spec, "columns": result.columns, "rows": result.rows, **result.extra}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit_results(result: SweepResult, path, format: str = "csv") -> Path:
    """Write ``result`` to ``path``; a directory gets ``<kind>.<format>`` inside it."""
    path = Path(path)
    if path.is_dir():
        path = path / f"{result.kind}.{format}"
    if format == "csv":
        text = results_csv(result)
    elif format == "json":
        text = results_json(result)
    else:
        raise ValueError(f"unknown format {format!r}")
    path.write_bytes(text.encode("utf-8"))
    return path
