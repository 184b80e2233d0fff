"""Stellarbeat-style snapshot documents, SCP-style round logs and synthetic fixtures.

Snapshot documents are JSON objects with a ``validators`` list (``publicKey``,
``name``, ``organizationId``, ``isValidating``, ``fullValidator``,
``overloaded``, ``uptimePercent``, ``quorumSet``) and an ``organizations``
list (``id``, ``name``, ``validators``). Nested ``innerQuorumSets`` are
flattened and thresholds are ignored: a slice is a plain member set.

Round logs are JSON lines with ``round``, ``nodeId``, ``externalizedValue``
(null when the node externalized nothing) and an informational ``timestamp``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

from afba.model import NetworkSnapshot, Organization, QuorumSlice, Status, Validator, validate_snapshot
from afba.reputation import ReputationParams, ReputationState, agreement_bit, ingest_round, initial_state
from afba.simulator import majority_value

PathLike = Union[str, os.PathLike]

_BASE32 = "ABCDEFGHIJKLMNOPQRSTUVWXYZ234567"


class SnapshotError(ValueError):
    def __init__(self, errors: Sequence[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


class RoundLogError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _flatten_qset(qset) -> set[str]:
    if not qset:
        return set()
    out = set(qset.get("validators", ()))
    for inner in qset.get("innerQuorumSets", ()):
        out |= _flatten_qset(inner)
    return out


def _require(record: Mapping, key: str, where: str):
    if key not in record:
        raise SnapshotError([f"{where}: missing required field {key!r}"])
    return record[key]


def snapshot_from_dict(doc: Mapping) -> NetworkSnapshot:
    if not isinstance(doc, Mapping):
        raise SnapshotError(["document root must be an object"])
    raw_validators = doc.get("validators")
    raw_orgs = doc.get("organizations")
    if not isinstance(raw_validators, list):
        raise SnapshotError(["missing required field 'validators' (list)"])
    if not isinstance(raw_orgs, list):
        raise SnapshotError(["missing required field 'organizations' (list)"])

    orgs = {}
    for i, rec in enumerate(raw_orgs):
        where = f"organizations[{i}]"
        oid = str(_require(rec, "id", where))
        members = _require(rec, "validators", where)
        if oid in orgs:
            raise SnapshotError([f"{where}: duplicate organization id {oid!r}"])
        orgs[oid] = Organization(oid, frozenset(members), rec.get("name", ""))

    validators = {}
    slices = {}
    for i, rec in enumerate(raw_validators):
        where = f"validators[{i}]"
        key = _require(rec, "publicKey", where)
        org = _require(rec, "organizationId", where)
        if not key:
            raise SnapshotError([f"{where}: empty publicKey"])
        if key in validators:
            raise SnapshotError([f"{where}: duplicate publicKey {key!r}"])
        if org not in orgs:
            raise SnapshotError([f"{where}: organizationId {org!r} does not name an organization"])
        is_validating = bool(rec.get("isValidating", True))
        status = rec.get("status")
        status = Status(status) if status else (Status.ACTIVE if is_validating else Status.CRASHED)
        uptime = rec.get("uptimePercent", 100.0)
        validators[key] = Validator(
            id=key,
            org=org,
            is_validating=is_validating,
            full_validator=bool(rec.get("fullValidator", True)),
            overloaded=bool(rec.get("overloaded", False)),
            uptime=float(uptime) / 100.0,
            status=status,
            name=rec.get("name", ""),
        )
        members = _flatten_qset(rec.get("quorumSet")) - {key}
        if members:
            slices[key] = QuorumSlice(key, frozenset(members))

    snap = NetworkSnapshot(validators, orgs, slices)
    problems = validate_snapshot(snap)
    if problems:
        raise SnapshotError([str(p) for p in problems])
    return snap


def parse_snapshot(document: Union[str, bytes]) -> NetworkSnapshot:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SnapshotError([f"malformed JSON: {exc}"]) from exc
    return snapshot_from_dict(doc)


def load_snapshot(path: PathLike) -> NetworkSnapshot:
    return parse_snapshot(Path(path).read_text(encoding="utf-8"))


def snapshot_to_dict(snapshot: NetworkSnapshot) -> dict:
    validators = []
    for key in sorted(snapshot.validators):
        v = snapshot.validators[key]
        sl = snapshot.slices.get(key)
        members = sorted(sl.members) if sl else []
        validators.append(
            {
                "publicKey": v.id,
                "name": v.name,
                "organizationId": v.org,
                "isValidating": v.is_validating,
                "fullValidator": v.full_validator,
                "overloaded": v.overloaded,
                "uptimePercent": v.uptime * 100.0,
                "status": v.status.value,
                "quorumSet": {"threshold": len(members), "validators": members, "innerQuorumSets": []},
            }
        )
    orgs = [
        {"id": o.id, "name": o.name, "validators": sorted(o.members)}
        for o in (snapshot.organizations[k] for k in sorted(snapshot.organizations))
    ]
    return {"validators": validators, "organizations": orgs}


def emit_snapshot(snapshot: NetworkSnapshot) -> str:
    return json.dumps(snapshot_to_dict(snapshot), indent=2, sort_keys=True) + "\n"


def save_snapshot(snapshot: NetworkSnapshot, path: PathLike) -> None:
    Path(path).write_text(emit_snapshot(snapshot), encoding="utf-8", newline="\n")


@dataclass(frozen=True)
class RoundLogRecord:
    round: int
    node: str
    value: Optional[str]
    timestamp: Optional[float] = None


class RoundGroup(NamedTuple):
    round: int
    records: tuple[RoundLogRecord, ...]


def parse_round_log_lines(lines: Iterable[str]) -> list[RoundGroup]:
    groups: list[RoundGroup] = []
    current: list[RoundLogRecord] = []
    last = None
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            rnd = rec["round"]
            node = rec["nodeId"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise RoundLogError(lineno, f"malformed record ({exc})") from None
        if not isinstance(rnd, int) or isinstance(rnd, bool):
            raise RoundLogError(lineno, f"round must be an integer, got {rnd!r}")
        value = rec.get("externalizedValue")
        record = RoundLogRecord(rnd, str(node), None if value is None else str(value), rec.get("timestamp"))
        if last is not None and rnd < last:
            raise RoundLogError(lineno, f"round {rnd} after round {last}")
        if last is not None and rnd != last:
            groups.append(RoundGroup(last, tuple(current)))
            current = []
        current.append(record)
        last = rnd
    if current:
        groups.append(RoundGroup(last, tuple(current)))
    return groups


def parse_round_log(path: PathLike) -> list[RoundGroup]:
    with open(path, encoding="utf-8") as fh:
        return parse_round_log_lines(fh)


def emit_round_log(records: Iterable[RoundLogRecord]) -> str:
    out = []
    for r in records:
        out.append(
            json.dumps(
                {"round": r.round, "nodeId": r.node, "externalizedValue": r.value, "timestamp": r.timestamp},
                sort_keys=True,
            )
        )
    return "".join(line + "\n" for line in out)


def replay_round_log(
    groups: Sequence[RoundGroup],
    params: ReputationParams,
    nodes: Optional[Iterable[str]] = None,
) -> dict[str, ReputationState]:
    """Fold a round log into reputation states.

    Nodes that have no record in a round, or a null value, score 0 for it, as
    does everyone in a round where nothing was externalized.
    """
    if nodes is None:
        nodes = sorted({r.node for g in groups for r in g.records})
    states = {n: initial_state(n, params) for n in nodes}
    for g in groups:
        values = {r.node: r.value for r in g.records if r.value is not None}
        majority = majority_value(values, values.keys())
        for n, st in states.items():
            bit = 0 if majority is None else agreement_bit(values.get(n), majority)
            states[n] = ingest_round(st, bit, params)
    return states


def synthesize_round_log(
    nodes: Sequence[str],
    reliability: Mapping[str, float],
    rounds: int,
    seed: int = 0,
) -> list[RoundLogRecord]:
    """Each round every node externalizes the round's value with its reliability, else nothing."""
    rng = np.random.default_rng(seed)
    out = []
    ordered = sorted(nodes)
    p = np.array([reliability[n] for n in ordered])
    for r in range(1, rounds + 1):
        hits = rng.random(len(ordered)) < p
        value = f"v{r}"
        for n, hit in zip(ordered, hits):
            out.append(RoundLogRecord(r, n, value if hit else None, float(r * 5)))
    return out


def _public_key(rng: np.random.Generator) -> str:
    return "G" + "".join(_BASE32[i] for i in rng.integers(0, 32, size=55))


def _org_id(rng: np.random.Generator) -> str:
    return "".join(f"{b:02x}" for b in rng.integers(0, 256, size=16))


def _distribute(org_count: int, total: int) -> list[int]:
    base, extra = divmod(total, org_count)
    return [base + (1 if i < extra else 0) for i in range(org_count)]


def synthesize_fixture(
    org_count: int,
    total: Optional[int] = None,
    members_per_org: Union[int, Sequence[int], None] = None,
    seed: int = 0,
) -> NetworkSnapshot:
    """A healthy synthetic population with the requested organizational shape.

    Give either ``total`` (spread as evenly as possible) or ``members_per_org``
    (one size for all, or one per organization).
    """
    if org_count < 1:
        raise ValueError("org_count must be >= 1")
    if (total is None) == (members_per_org is None):
        raise ValueError("give exactly one of total or members_per_org")
    if total is not None:
        if total < org_count:
            raise ValueError("total must be at least org_count")
        sizes = _distribute(org_count, total)
    elif isinstance(members_per_org, int):
        sizes = [members_per_org] * org_count
    else:
        sizes = list(members_per_org)
        if len(sizes) != org_count:
            raise ValueError("members_per_org length must equal org_count")
    if any(s < 1 for s in sizes):
        raise ValueError("every organization needs at least one member")
    snap = NetworkSnapshot({}, {}, {})
    rng = np.random.default_rng(seed)
    for size in sizes:
        snap = _add_org(snap, size, rng)
    return snap


def _add_org(snapshot: NetworkSnapshot, size: int, rng: np.random.Generator) -> NetworkSnapshot:
    idx = len(snapshot.organizations)
    oid = _org_id(rng)
    while oid in snapshot.organizations:
        oid = _org_id(rng)
    validators = dict(snapshot.validators)
    members = []
    for j in range(size):
        key = _public_key(rng)
        while key in validators:
            key = _public_key(rng)
        validators[key] = Validator(id=key, org=oid, name=f"org{idx:02d}-v{j}")
        members.append(key)
    orgs = dict(snapshot.organizations)
    orgs[oid] = Organization(oid, frozenset(members), f"org{idx:02d}")
    return NetworkSnapshot(validators, orgs, dict(snapshot.slices))


def add_organization(snapshot: NetworkSnapshot, size: int, seed: int = 0) -> NetworkSnapshot:
    """Append one organization of ``size`` fresh validators (no slices yet)."""
    if size < 1:
        raise ValueError("size must be >= 1")
    return _add_org(snapshot, size, np.random.default_rng([seed, len(snapshot.organizations)]))
