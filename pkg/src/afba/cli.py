"""``afba`` command line: ingest, analyze, simulate, sweep and fixture."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

from afba.experiments import (
    KINDS,
    emit_results,
    env_seed,
    run_sweep,
    scenario_from_dict,
    sweep_spec_from_dict,
)
from afba.ingest import SnapshotError, load_snapshot, save_snapshot, synthesize_fixture
from afba.model import Status
from afba.quorum import build_graph, byzantine_bound, check_intersection, scc
from afba.simulator import run_scenario


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> None:
    path.write_bytes(text.encode("utf-8"))


def _load_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_ingest(args) -> int:
    try:
        snap = load_snapshot(args.snapshot)
    except SnapshotError as exc:
        sys.stdout.write(_dump({"valid": False, "errors": exc.errors}))
        return 1
    status = Counter(v.status.value for v in snap.validators.values())
    report = {
        "valid": True,
        "validators": snap.n,
        "organizations": len(snap.organizations),
        "slices": len(snap.slices),
        "status": dict(sorted(status.items())),
        "byzantine_bound": byzantine_bound(max(snap.n, 1)),
    }
    sys.stdout.write(_dump(report))
    return 0


def cmd_analyze(args) -> int:
    try:
        snap = load_snapshot(args.snapshot)
    except SnapshotError as exc:
        sys.stdout.write(_dump({"valid": False, "errors": exc.errors}))
        return 1
    active = frozenset(k for k, v in snap.validators.items() if v.status is Status.ACTIVE)
    slices = {k: s for k, s in snap.slices.items() if k in active}
    report = scc(build_graph(slices, active, known=snap.validators.keys()))
    out = {
        "active": len(active),
        "scc": {
            "component_count": report.component_count,
            "globally_connected": report.globally_connected,
            "component_sizes": [len(c) for c in report.components],
        },
    }
    if len(active) <= args.max_enum:
        res = check_intersection(slices, active, args.max_enum)
        out["intersection"] = {
            "checked": True,
            "intersects": res.intersects,
            "minimal_quorums": [sorted(q) for q in sorted(res.quorums, key=lambda q: (len(q), sorted(q)))],
            "disjoint_pair": [sorted(q) for q in res.pair] if res.pair else None,
        }
    else:
        out["intersection"] = {"checked": False, "reason": f"{len(active)} active validators exceed --max-enum {args.max_enum}"}
    sys.stdout.write(_dump(out))
    return 0


def _rounds_csv(rows) -> str:
    buf = io.StringIO()
    cols = ["round", "proposal", "majority_value", "scc_count", "mode", "regeneration_attempts", "agreeing"]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in rows:
        writer.writerow(
            [r.round, r.proposal, r.majority_value or "", r.scc_count, r.mode.value, r.regeneration_attempts, sum(r.bits.values())]
        )
    return buf.getvalue()


def cmd_simulate(args) -> int:
    path = Path(args.scenario)
    config = scenario_from_dict(_load_json(args.scenario), base_dir=path.parent, seed=args.seed)
    outcome = run_scenario(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "events.jsonl", "".join(json.dumps(e, sort_keys=True) + "\n" for e in outcome.events))
    _write(out / "rounds.jsonl", "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in outcome.rounds))
    _write(out / "rounds.csv", _rounds_csv(outcome.rounds))
    _write(out / "summary.json", _dump({"seed": config.seed, **outcome.summary}))
    sys.stdout.write(_dump(outcome.summary))
    return 0


def _resolve_paths(base: dict, root: Path) -> dict:
    base = dict(base)
    snap = base.get("snapshot")
    if isinstance(snap, str) and not Path(snap).is_absolute():
        base["snapshot"] = str(root / snap)
    return base


def cmd_sweep(args) -> int:
    doc = _load_json(args.spec) if args.spec else {}
    if args.spec:
        doc["base"] = _resolve_paths(doc.get("base", {}), Path(args.spec).parent)
    spec = sweep_spec_from_dict(doc, kind=args.kind, seeds=args.seeds)
    result = run_sweep(spec, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = emit_results(result, out, "csv")
    json_path = emit_results(result, out, "json")
    sys.stdout.write(_dump({"kind": result.kind, "rows": len(result.rows), "csv": str(csv_path), "json": str(json_path), **result.extra}))
    return 0


def cmd_fixture(args) -> int:
    seed = args.seed
    if seed is None:
        seed = env_seed() or 0
    snap = synthesize_fixture(args.orgs, total=args.total, seed=seed)
    save_snapshot(snap, args.out)
    sys.stdout.write(_dump({"validators": snap.n, "organizations": len(snap.organizations), "out": args.out}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="afba", description="Adaptive FBA simulation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="validate a snapshot document")
    s.add_argument("--snapshot", required=True)
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("analyze", help="SCC report and quorum-intersection check")
    s.add_argument("--snapshot", required=True)
    s.add_argument("--max-enum", type=int, default=12, help="largest active set to enumerate quorums for")
    s.set_defaults(fn=cmd_analyze)

    s = sub.add_parser("simulate", help="run a scenario and write its logs")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("--kind", required=True, choices=KINDS)
    s.add_argument("--spec", default=None, help="sweep spec JSON (grid, seeds, seed, base)")
    s.add_argument("--out", required=True)
    s.add_argument("--seeds", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(fn=cmd_sweep)

    s = sub.add_parser("fixture", help="write a synthetic snapshot")
    s.add_argument("--orgs", type=int, required=True)
    s.add_argument("--total", type=int, required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_fixture)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"afba {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
