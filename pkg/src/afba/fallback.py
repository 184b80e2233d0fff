"""Core Quorum fallback: uniform random slices, blind to reputation and organizations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import AbstractSet, Mapping, NamedTuple

import numpy as np

from afba.model import QuorumSlice
from afba.quorum import QuorumGraph, SccReport, build_graph, scc


@dataclass(frozen=True)
class CoreParams:
    s: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("core slice size s must be >= 1")


class PoolTooSmall(ValueError):
    pass


def core_slice(
    owner: str,
    all_nodes: AbstractSet[str],
    params: CoreParams,
    rng: np.random.Generator,
) -> QuorumSlice:
    """A uniformly random ``params.s``-subset of ``all_nodes`` minus the owner."""
    pool = sorted(set(all_nodes) - {owner})
    if params.s > len(pool):
        raise PoolTooSmall(f"cannot draw {params.s} peers for {owner!r} from {len(pool)}")
    picks = rng.choice(len(pool), size=params.s, replace=False)
    return QuorumSlice(owner, frozenset(pool[i] for i in picks))


class CoreResult(NamedTuple):
    slices: Mapping[str, QuorumSlice]
    graph: QuorumGraph
    report: SccReport
    s_effective: int


def engage_core(active: AbstractSet[str], params: CoreParams) -> CoreResult:
    if len(active) < 2:
        raise PoolTooSmall(f"core mode needs at least 2 active validators, have {len(active)}")
    s_eff = min(params.s, len(active) - 1)
    eff = CoreParams(s_eff, params.seed)
    rng = np.random.default_rng(params.seed)
    slices = {v: core_slice(v, active, eff, rng) for v in sorted(active)}
    graph = build_graph(slices, active)
    return CoreResult(slices, graph, scc(graph), s_eff)
