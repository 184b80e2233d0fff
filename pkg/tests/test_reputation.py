import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afba.reputation import (
    EigenTrustNotConverged,
    NotBlacklisted,
    ReputationParams,
    TrustCategory,
    agreement_bit,
    classify,
    eigentrust,
    ingest_round,
    initial_state,
    readmission_check,
    readmit,
    replay_bits,
    window_score,
)
from oracles import power_iteration, trailing_mean

P = ReputationParams()
T = TrustCategory

CLASSIFY_TABLE = [
    ((0.90, 0), T.TRUSTED),
    ((0.85, 0), T.TRUSTED),
    ((0.75, 0), T.SEMI_TRUSTED),
    ((0.50, 0), T.COOLDOWN),
    ((0.20, 0), T.BLACKLISTED),
    ((0.95, 5), T.BLACKLISTED),
]


@pytest.mark.parametrize("args,expected", CLASSIFY_TABLE)
def test_classify_table(args, expected):
    assert classify(*args, P) is expected


@pytest.mark.parametrize("score,expected", [(0.70, T.SEMI_TRUSTED), (0.30, T.COOLDOWN), (0.2999, T.BLACKLISTED)])
def test_lower_bounds_inclusive(score, expected):
    assert classify(score, 0, P) is expected


def test_agreement_bit():
    assert agreement_bit("X", "X") == 1
    assert agreement_bit("Y", "X") == 0
    assert agreement_bit(None, "X") == 0


def test_warmup_score_defaults_to_theta2():
    st0 = initial_state("a", P)
    assert st0.score == 0.70 and st0.category is T.SEMI_TRUSTED
    assert window_score((), P) == 0.70
    assert initial_state("a", ReputationParams(warmup_score=0.9)).category is T.TRUSTED


def test_five_zero_bits_blacklist_from_full_trust():
    st0 = replay_bits("a", [1] * 20, P)
    assert st0.category is T.TRUSTED
    for i in range(4):
        st0 = ingest_round(st0, 0, P)
        assert st0.category is not T.BLACKLISTED, i
    st0 = ingest_round(st0, 0, P)
    assert st0.score == 0.5 and st0.category is T.BLACKLISTED


def test_blacklist_is_sticky_until_readmitted():
    st0 = replay_bits("a", [0] * 5, P)
    assert st0.category is T.BLACKLISTED
    st0 = replay_bits("a", [0] * 5 + [1] * 30, P)
    assert st0.score == 1.0 and st0.category is T.BLACKLISTED


def test_readmission():
    bl = replay_bits("a", [0] * 6, P)
    from dataclasses import replace

    good = replace(bl, eigentrust_baseline=0.8)
    assert readmission_check(good, P)
    back = readmit(good, P)
    assert back.category is T.COOLDOWN and back.window == () and back.disagree_streak == 0
    assert readmit(replace(bl, eigentrust_baseline=0.2), P) is None
    with pytest.raises(NotBlacklisted):
        readmission_check(initial_state("b", P), P)


def test_rejects_non_bits():
    with pytest.raises(ValueError):
        ingest_round(initial_state("a", P), 2, P)


def test_params_validation():
    with pytest.raises(ValueError):
        ReputationParams(theta1=0.5, theta2=0.7)
    with pytest.raises(ValueError):
        ReputationParams(window_n=0)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=200), st.integers(1, 50))
def test_incremental_equals_trailing_mean(bits, n):
    params = ReputationParams(window_n=n)
    state = replay_bits("a", bits, params)
    assert state.score == trailing_mean(bits, n, params.initial_score)
    assert len(state.window) == min(n, len(bits))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=60))
def test_category_matches_classify_until_blacklisted(bits):
    state = initial_state("a", P)
    streak = 0
    ever = False
    for b in bits:
        state = ingest_round(state, b, P)
        streak = 0 if b else streak + 1
        expected = classify(state.score, streak, P)
        ever = ever or expected is T.BLACKLISTED
        assert state.category is (T.BLACKLISTED if ever else expected)


# -- EigenTrust ---------------------------------------------------------------


def test_eigentrust_matches_oracle_n4():
    m = [[0, 3, 1, 0], [1, 0, 0, 2], [0, 4, 0, 1], [2, 2, 2, 0]]
    t = eigentrust(m)
    assert np.abs(t - np.array(power_iteration(m))).sum() < 1e-9


def test_eigentrust_uniform_on_symmetric_complete():
    m = np.ones((5, 5))
    assert np.allclose(eigentrust(m), 0.2, atol=1e-12)


def test_eigentrust_zero_matrix_returns_pretrust():
    pre = np.array([0.5, 0.25, 0.25])
    assert np.allclose(eigentrust(np.zeros((3, 3)), pre), pre)


def test_eigentrust_nonconvergence_reported():
    m = np.array([[0, 1.0], [1.0, 0]])
    with pytest.raises(EigenTrustNotConverged):
        eigentrust(m, damping=0.0, pretrusted=[1.0, 0.0], max_iters=50)


@pytest.mark.parametrize("bad", [np.zeros((2, 3)), -np.ones((2, 2)), np.zeros((0, 0))])
def test_eigentrust_rejects_bad_matrices(bad):
    with pytest.raises(ValueError):
        eigentrust(bad)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_eigentrust_permutation_equivariant(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.random((n, n)) * (rng.random((n, n)) < 0.6)
    perm = rng.permutation(n)
    t = eigentrust(m)
    tp = eigentrust(m[np.ix_(perm, perm)])
    assert np.abs(tp - t[perm]).sum() < 1e-9
    assert abs(t.sum() - 1.0) < 1e-9
