import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afba.ingest import (
    RoundLogError,
    RoundLogRecord,
    SnapshotError,
    add_organization,
    emit_round_log,
    emit_snapshot,
    load_snapshot,
    parse_round_log,
    parse_round_log_lines,
    parse_snapshot,
    replay_round_log,
    save_snapshot,
    synthesize_fixture,
    synthesize_round_log,
)
from afba.model import Status, validate_snapshot
from afba.reputation import ReputationParams
from oracles import trailing_mean

DOC = {
    "validators": [
        {
            "publicKey": "GA",
            "name": "alpha",
            "organizationId": "o1",
            "isValidating": True,
            "uptimePercent": 99.5,
            "quorumSet": {"threshold": 2, "validators": ["GA", "GB"], "innerQuorumSets": [{"validators": ["GC"]}]},
        },
        {"publicKey": "GB", "organizationId": "o1", "isValidating": False},
        {"publicKey": "GC", "organizationId": "o2", "overloaded": True},
    ],
    "organizations": [{"id": "o1", "name": "One", "validators": ["GA", "GB"]}, {"id": "o2", "validators": ["GC"]}],
}


def test_parse_snapshot_fields():
    snap = parse_snapshot(json.dumps(DOC))
    assert snap.n == 3 and len(snap.organizations) == 2
    assert snap.slices["GA"].members == {"GB", "GC"}
    assert snap.validators["GA"].uptime == pytest.approx(0.995)
    assert snap.validators["GB"].status is Status.CRASHED
    assert snap.validators["GC"].overloaded
    assert "GB" not in snap.slices


@pytest.mark.parametrize(
    "mutate,needle",
    [
        (lambda d: d["validators"][1].pop("publicKey"), "publicKey"),
        (lambda d: d["validators"].append(dict(d["validators"][0])), "duplicate"),
        (lambda d: d["validators"][2].update(organizationId="o9"), "o9"),
        (lambda d: d["organizations"][0]["validators"].append("GC"), "org-overlap"),
        (lambda d: d.pop("organizations"), "organizations"),
    ],
)
def test_snapshot_errors(mutate, needle):
    doc = json.loads(json.dumps(DOC))
    mutate(doc)
    with pytest.raises(SnapshotError) as exc:
        parse_snapshot(json.dumps(doc))
    assert needle in str(exc.value)


def test_malformed_json():
    with pytest.raises(SnapshotError):
        parse_snapshot("{nope")


def test_snapshot_round_trip(tmp_path, fixture74):
    path = tmp_path / "s.json"
    save_snapshot(fixture74, path)
    back = load_snapshot(path)
    assert back == fixture74
    assert emit_snapshot(back) == path.read_text()


def test_round_trip_with_slices():
    snap = parse_snapshot(json.dumps(DOC))
    assert parse_snapshot(emit_snapshot(snap)) == snap


@pytest.mark.parametrize("orgs,total", [(24, 74), (30, 134), (3, 3)])
def test_fixture_sizes(orgs, total):
    snap = synthesize_fixture(orgs, total=total, seed=1)
    assert snap.n == total and len(snap.organizations) == orgs
    assert validate_snapshot(snap) == []
    sizes = sorted(len(o.members) for o in snap.organizations.values())
    assert sizes[-1] - sizes[0] <= 1


def test_fixture_is_seeded():
    assert synthesize_fixture(5, total=12, seed=3) == synthesize_fixture(5, total=12, seed=3)
    assert synthesize_fixture(5, total=12, seed=3) != synthesize_fixture(5, total=12, seed=4)
    key = next(iter(synthesize_fixture(1, total=1).validators))
    assert len(key) == 56 and key[0] == "G"


def test_fixture_argument_checks():
    with pytest.raises(ValueError):
        synthesize_fixture(3, total=2)
    with pytest.raises(ValueError):
        synthesize_fixture(3)
    with pytest.raises(ValueError):
        synthesize_fixture(2, members_per_org=[1, 2, 3])


def test_add_organization():
    snap = synthesize_fixture(23, total=71, seed=0)
    grown = add_organization(snap, 3, seed=0)
    assert grown.n == 74 and len(grown.organizations) == 24
    assert validate_snapshot(grown) == []


def test_round_log_parse_errors():
    good = '{"round": 1, "nodeId": "a", "externalizedValue": "x"}'
    with pytest.raises(RoundLogError) as exc:
        parse_round_log_lines([good, "{bad"])
    assert exc.value.line == 2
    with pytest.raises(RoundLogError) as exc:
        parse_round_log_lines(['{"round": 2, "nodeId": "a"}', good])
    assert exc.value.line == 2
    with pytest.raises(RoundLogError):
        parse_round_log_lines(['{"round": "1", "nodeId": "a"}'])


def test_round_log_grouping(tmp_path):
    recs = [RoundLogRecord(1, "a", "x"), RoundLogRecord(1, "b", None), RoundLogRecord(3, "a", "y")]
    path = tmp_path / "log.jsonl"
    path.write_text(emit_round_log(recs))
    groups = parse_round_log(path)
    assert [g.round for g in groups] == [1, 3]
    assert groups[0].records[1].value is None


def extract_bits(lines, nodes):
    """Independent majority and bit extraction straight from the JSON lines."""
    rounds = {}
    for line in lines:
        rec = json.loads(line)
        rounds.setdefault(rec["round"], {})[rec["nodeId"]] = rec["externalizedValue"]
    bits = {n: [] for n in nodes}
    for r in sorted(rounds):
        vals = [v for v in rounds[r].values() if v is not None]
        maj = None
        if vals:
            best = max(vals.count(v) for v in set(vals))
            maj = sorted(v for v in set(vals) if vals.count(v) == best)[0]
        for n in nodes:
            bits[n].append(int(maj is not None and rounds[r].get(n) == maj))
    return bits


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(1, 30), st.integers(1, 12), st.integers(0, 2**31))
def test_replay_matches_extracted_bits(n_nodes, rounds, window, seed):
    nodes = [f"n{i}" for i in range(n_nodes)]
    rng = np.random.default_rng(seed)
    recs = []
    for r in range(1, rounds + 1):
        for n in nodes:
            u = rng.random()
            recs.append(RoundLogRecord(r, n, None if u < 0.2 else ("a" if u < 0.7 else "b")))
    text = emit_round_log(recs)
    params = ReputationParams(window_n=window)
    states = replay_round_log(parse_round_log_lines(text.splitlines()), params)
    bits = extract_bits(text.splitlines(), nodes)
    for n in nodes:
        assert states[n].score == trailing_mean(bits[n], window, params.initial_score)


def test_synthesize_round_log_reliability():
    recs = synthesize_round_log(["a", "b"], {"a": 1.0, "b": 0.0}, rounds=5, seed=0)
    assert len(recs) == 10
    assert all((r.value is not None) == (r.node == "a") for r in recs)
