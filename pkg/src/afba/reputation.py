"""Validator reputation on two timescales.

Short term, every round yields an agreement bit per node and the node's score
is the mean of its last ``window_n`` bits; the score maps to one of four trust
categories. Long term, an EigenTrust vector over a local-trust matrix gives a
baseline that decides whether a blacklisted node may come back.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Hashable, Optional, Sequence

import numpy as np


class TrustCategory(enum.Enum):
    TRUSTED = "Trusted"
    SEMI_TRUSTED = "SemiTrusted"
    COOLDOWN = "Cooldown"
    BLACKLISTED = "Blacklisted"


@dataclass(frozen=True)
class ReputationParams:
    window_n: int = 10
    theta1: float = 0.85
    theta2: float = 0.70
    theta3: float = 0.30
    blacklist_streak: int = 5
    readmission_floor: float = 0.5
    # None means "use theta2"
    warmup_score: Optional[float] = None
    eigentrust_every: int = 100
    damping: float = 0.15
    epsilon: float = 1e-9
    max_iters: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.theta3 < self.theta2 < self.theta1 <= 1.0:
            raise ValueError("thresholds must satisfy 0 <= theta3 < theta2 < theta1 <= 1")
        if self.window_n < 1:
            raise ValueError("window_n must be >= 1")
        if self.blacklist_streak < 1:
            raise ValueError("blacklist_streak must be >= 1")
        if self.eigentrust_every < 1:
            raise ValueError("eigentrust_every must be >= 1")
        if not 0.0 <= self.damping <= 1.0:
            raise ValueError("damping must lie in [0, 1]")

    @property
    def initial_score(self) -> float:
        return self.theta2 if self.warmup_score is None else self.warmup_score


@dataclass(frozen=True)
class AgreementRecord:
    round: int
    node: str
    bit: int

    def __post_init__(self):
        if self.bit not in (0, 1):
            raise ValueError(f"agreement bit must be 0 or 1, got {self.bit!r}")


@dataclass(frozen=True)
class ReputationState:
    node: str
    window: tuple[int, ...]
    score: float
    disagree_streak: int
    category: TrustCategory
    eigentrust_baseline: float = 1.0


def agreement_bit(node_value: Optional[Hashable], majority_value: Hashable) -> int:
    """1 when the node externalized the majority value; a missing value counts as 0."""
    return int(node_value is not None and node_value == majority_value)


def window_score(window: Sequence[int], params: ReputationParams) -> float:
    tail = list(window)[-params.window_n:]
    if not tail:
        return params.initial_score
    return sum(tail) / len(tail)


def classify(score: float, disagree_streak: int, params: ReputationParams) -> TrustCategory:
    if score < params.theta3 or disagree_streak >= params.blacklist_streak:
        return TrustCategory.BLACKLISTED
    if score >= params.theta1:
        return TrustCategory.TRUSTED
    if score >= params.theta2:
        return TrustCategory.SEMI_TRUSTED
    return TrustCategory.COOLDOWN


def initial_state(node: str, params: ReputationParams, baseline: float = 1.0) -> ReputationState:
    score = params.initial_score
    return ReputationState(node, (), score, 0, classify(score, 0, params), baseline)


def ingest_round(state: ReputationState, bit: int, params: ReputationParams) -> ReputationState:
    """Fold one agreement bit into ``state``.

    Blacklisting is sticky: once blacklisted the window keeps moving but the
    category only changes through :func:`readmit`.
    """
    if bit not in (0, 1):
        raise ValueError(f"agreement bit must be 0 or 1, got {bit!r}")
    window = (state.window + (bit,))[-params.window_n:]
    score = sum(window) / len(window)
    streak = 0 if bit else state.disagree_streak + 1
    if state.category is TrustCategory.BLACKLISTED:
        category = TrustCategory.BLACKLISTED
    else:
        category = classify(score, streak, params)
    return replace(state, window=window, score=score, disagree_streak=streak, category=category)


def replay_bits(node: str, bits: Sequence[int], params: ReputationParams) -> ReputationState:
    state = initial_state(node, params)
    for b in bits:
        state = ingest_round(state, b, params)
    return state


class NotBlacklisted(ValueError):
    pass


def readmission_check(state: ReputationState, params: ReputationParams) -> bool:
    if state.category is not TrustCategory.BLACKLISTED:
        raise NotBlacklisted(f"{state.node} is {state.category.value}, not Blacklisted")
    return state.eigentrust_baseline >= params.readmission_floor


def readmit(state: ReputationState, params: ReputationParams) -> Optional[ReputationState]:
    """Return the re-entry state (Cooldown, empty window) or None if refused."""
    if not readmission_check(state, params):
        return None
    return replace(
        state,
        window=(),
        score=params.initial_score,
        disagree_streak=0,
        category=TrustCategory.COOLDOWN,
    )


class EigenTrustNotConverged(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"EigenTrust did not converge in {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


def eigentrust(
    matrix,
    pretrusted=None,
    damping: float = 0.15,
    epsilon: float = 1e-9,
    max_iters: int = 1000,
) -> np.ndarray:
    """Global trust vector from a local-trust matrix (rows rate columns).

    Rows are normalized to sum to one; a row with no outgoing trust is
    replaced by the pretrusted distribution. Iterates
    ``t <- (1 - damping) * C.T @ t + damping * p`` from ``t = p`` until the L1
    step falls below ``epsilon``.
    """
    c = np.array(matrix, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"trust matrix must be square, got shape {c.shape}")
    n = c.shape[0]
    if n == 0:
        raise ValueError("trust matrix is empty")
    if (c < 0).any():
        raise ValueError("trust matrix has negative entries")
    np.fill_diagonal(c, 0.0)

    if pretrusted is None:
        p = np.full(n, 1.0 / n)
    else:
        p = np.asarray(pretrusted, dtype=float)
        if p.shape != (n,) or (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("pretrusted must be a non-negative length-n vector summing to 1")

    sums = c.sum(axis=1)
    empty = sums == 0
    c[~empty] /= sums[~empty, None]
    c[empty] = p

    ct = c.T
    t = p.copy()
    residual = np.inf
    for _ in range(max_iters):
        nxt = (1.0 - damping) * (ct @ t) + damping * p
        residual = np.abs(nxt - t).sum()
        t = nxt
        if residual < epsilon:
            return t / t.sum()
    raise EigenTrustNotConverged(max_iters, float(residual))
