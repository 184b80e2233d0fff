import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from afba.ingest import synthesize_fixture  # noqa: E402
from afba.model import NetworkSnapshot, Organization, QuorumSlice, Validator  # noqa: E402


def make_snapshot(orgs, slices=None):
    """``orgs`` maps org id -> member ids; ``slices`` maps owner -> members."""
    validators = [Validator(v, o) for o, members in orgs.items() for v in members]
    organizations = [Organization(o, frozenset(m)) for o, m in orgs.items()]
    sl = [QuorumSlice(k, frozenset(m)) for k, m in (slices or {}).items()]
    return NetworkSnapshot.build(validators, organizations, sl)


@pytest.fixture(scope="session")
def fixture74():
    return synthesize_fixture(24, total=74, seed=0)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[str, bool, float]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, secs = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {name}  ({secs:.1f}s)")
