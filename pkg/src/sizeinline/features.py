"""Call-site state encoding: eleven integer features per decision."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidCallSiteError, ParameterError
from .irmodel import CallSite, ModuleGraph

STD_FLOOR = 1e-6


class FeatureVector(NamedTuple):
    caller_basic_block_count: int
    caller_conditionally_executed_blocks: int
    caller_users: int
    callee_basic_block_count: int
    callee_conditionally_executed_blocks: int
    callee_users: int
    callsite_height: int
    cost_estimate: int
    number_constant_params: int
    edge_count: int
    node_count: int


FEATURE_NAMES = FeatureVector._fields
N_FEATURES = len(FEATURE_NAMES)


def compute_heights(m: ModuleGraph) -> dict[str, int]:
    """Longest-path distance from each function's SCC down to a leaf SCC.

    Uses the module's frozen SCC partition; callers should compute this once
    per episode, before any inlining.
    """
    heights_by_scc: dict[int, int] = {}
    # sccs are stored callees-first, so every successor is already resolved
    for idx, comp in enumerate(m.sccs):
        h = 0
        for fid in comp:
            f = m.functions.get(fid)
            if f is None:
                continue
            for c in f.call_sites:
                t = m.scc_of.get(c.callee)
                if t is not None and t != idx:
                    h = max(h, heights_by_scc[t] + 1)
        heights_by_scc[idx] = h
    return {fid: heights_by_scc[m.scc_of[fid]] for fid in m.functions}


def extract_features(m: ModuleGraph, c: CallSite, heights: dict[str, int]) -> FeatureVector:
    if not m.is_live(c):
        raise InvalidCallSiteError(f"call site {c.id!r} is not live")
    caller = m.functions[c.caller]
    callee = m.functions[c.callee]
    return FeatureVector(
        caller.basic_block_count,
        caller.conditional_block_count,
        m.users(caller.id),
        callee.basic_block_count,
        callee.conditional_block_count,
        m.users(callee.id),
        heights[callee.id],
        callee.size - callee.savings_for(c.const_args) - 1,
        c.n_const,
        m.edge_count,
        m.node_count,
    )


@dataclass(frozen=True)
class FeatureStats:
    mean: tuple[float, ...]
    std: tuple[float, ...]
    count: int

    def __post_init__(self):
        if len(self.mean) != N_FEATURES or len(self.std) != N_FEATURES:
            raise ParameterError(f"feature stats must have {N_FEATURES} entries")
        if not all(math.isfinite(v) for v in self.mean + self.std):
            raise ParameterError("feature stats must be finite")
        if min(self.std) < STD_FLOOR:
            raise ParameterError("feature std below floor")

    @classmethod
    def identity(cls) -> "FeatureStats":
        return cls((0.0,) * N_FEATURES, (1.0,) * N_FEATURES, 0)


def _feature_rows(trajectories) -> np.ndarray:
    rows = []
    for item in trajectories:
        steps = getattr(item, "steps", None)
        if steps is not None:
            rows.extend(s.features for s in steps)
        else:
            rows.append(item)
    if not rows:
        raise ParameterError("cannot compute feature stats from zero steps")
    X = np.asarray(rows, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise ParameterError(f"expected rows of {N_FEATURES} features, got shape {X.shape}")
    return X


def corpus_stats(trajectories) -> FeatureStats:
    """Per-feature mean and (population) std over every recorded step.

    Accepts episode results or bare feature rows.  Sums are taken in exact
    integer arithmetic so the result does not depend on input order.
    """
    X = _feature_rows(trajectories)
    n = X.shape[0]
    mean, std = [], []
    for j in range(N_FEATURES):
        col = [int(v) for v in X[:, j]]
        s1 = sum(col)
        s2 = sum(v * v for v in col)
        mean.append(s1 / n)
        var = (n * s2 - s1 * s1) / (n * n)
        std.append(max(math.sqrt(max(var, 0.0)), STD_FLOOR))
    return FeatureStats(tuple(mean), tuple(std), n)
