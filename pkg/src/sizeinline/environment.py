"""Episodes over a module: traversal order, growth cap and trajectory logs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from ._io import atomic_write_text
from .errors import FormatError
from .features import N_FEATURES, FeatureVector, compute_heights, extract_features
from .irmodel import CallSite, ModuleGraph

SAMPLE = "sample"
ARGMAX = "argmax"
MODES = (SAMPLE, ARGMAX)


@dataclass(frozen=True)
class StepRecord:
    features: FeatureVector
    action: int
    reward: int
    forced: bool = False


@dataclass
class EpisodeResult:
    module_id: str
    initial_size: int
    final_size: int
    total_reward: int
    steps: list[StepRecord] = field(default_factory=list)

    def violations(self) -> list[str]:
        out = []
        if self.total_reward != self.initial_size - self.final_size:
            out.append(
                f"total_reward {self.total_reward} != initial_size - final_size "
                f"({self.initial_size} - {self.final_size})"
            )
        step_sum = sum(s.reward for s in self.steps)
        if self.total_reward != step_sum:
            out.append(f"total_reward {self.total_reward} != sum of step rewards {step_sum}")
        for i, s in enumerate(self.steps):
            if s.forced and (s.action != 0 or s.reward != 0):
                out.append(f"step {i}: forced step must have action 0 and reward 0")
            if s.action not in (0, 1):
                out.append(f"step {i}: action {s.action} not in {{0, 1}}")
            if s.action == 0 and s.reward != 0:
                out.append(f"step {i}: no-inline step with nonzero reward")
            if len(s.features) != N_FEATURES:
                out.append(f"step {i}: expected {N_FEATURES} features")
        return out

    @property
    def decisions(self) -> list[StepRecord]:
        return [s for s in self.steps if not s.forced]


class Traversal:
    """Iterator over call sites in inlining order.

    SCCs are visited callees-first; inside an SCC functions go by ascending
    id, and each function's call sites in their current list order.  Since
    inlining splices clones in place of the inlined call, the clones are
    visited next.  Edges inside one SCC are never yielded.
    """

    def __init__(self, m: ModuleGraph):
        self.module = m
        self._order = [fid for comp in m.sccs for fid in comp]
        self._fi = 0
        self._si = 0
        self._pending: str | None = None

    def __iter__(self):
        return self

    def __next__(self) -> CallSite:
        m = self.module
        order = self._order
        if self._pending is not None:
            f = m.functions.get(order[self._fi])
            # advance unless the pending site was replaced by an inline
            if f is not None and self._si < len(f.call_sites) and f.call_sites[self._si].id == self._pending:
                self._si += 1
            self._pending = None
        while self._fi < len(order):
            f = m.functions.get(order[self._fi])
            if f is not None:
                sites = f.call_sites
                while self._si < len(sites):
                    c = sites[self._si]
                    if m.same_scc(c.caller, c.callee) or not m.is_live(c):
                        self._si += 1
                        continue
                    self._pending = c.id
                    return c
            self._fi += 1
            self._si = 0
        raise StopIteration

    def fork(self, module: ModuleGraph) -> "Traversal":
        """Same position, driving a different (copied) module."""
        t = object.__new__(Traversal)
        t.module = module
        t._order = self._order
        t._fi, t._si, t._pending = self._fi, self._si, self._pending
        return t


def traversal_order(m: ModuleGraph) -> Traversal:
    return Traversal(m)


def over_cap(m: ModuleGraph, initial_size: int, cap_factor) -> bool:
    return m.size > Fraction(cap_factor) * initial_size


def _resolve_decide(decide, mode, rng):
    act = getattr(decide, "act", None)
    if act is None:
        return decide
    if mode == SAMPLE and rng is None:
        raise ValueError("sample mode needs an rng or a seed")
    return lambda f: act(f, mode, rng)


def run_episode(
    m: ModuleGraph,
    decide: Callable,
    mode: str = ARGMAX,
    cap_factor=None,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> EpisodeResult:
    """Run one inlining pass over a private copy of `m`.

    `decide` is either a plain ``FeatureVector -> {0, 1}`` callable or an
    object with an ``act(features, mode, rng)`` method (a policy network).
    Once the module grows past ``cap_factor * initial_size`` every later
    decision is forced to 0.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if rng is None and seed is not None:
        rng = np.random.default_rng(seed)
    choose = _resolve_decide(decide, mode, rng)
    cap = Fraction(m.growth_cap_factor if cap_factor is None else cap_factor)

    work = m.copy()
    initial = work.size
    heights = compute_heights(work)
    steps = []
    total = 0
    capped = False
    for c in Traversal(work):
        f = extract_features(work, c, heights)
        if not capped and over_cap(work, initial, cap):
            capped = True
        if capped:
            steps.append(StepRecord(f, 0, 0, True))
            continue
        a = int(choose(f))
        r = work.inline(c).step_reward if a == 1 else 0
        total += r
        steps.append(StepRecord(f, a, r, False))
    return EpisodeResult(m.name, initial, work.size, total, steps)


# -- trajectory logs -----------------------------------------------------------
#
# One JSON object per line, keys in a fixed order:
#   module_id, initial_size, final_size, total_reward,
#   steps: [[features..11], action, reward, forced(0|1)]


def episode_to_line(ep: EpisodeResult) -> str:
    obj = {
        "module_id": ep.module_id,
        "initial_size": ep.initial_size,
        "final_size": ep.final_size,
        "total_reward": ep.total_reward,
        "steps": [[list(s.features), s.action, s.reward, int(s.forced)] for s in ep.steps],
    }
    return json.dumps(obj, separators=(",", ":"))


_KEYS = ("module_id", "initial_size", "final_size", "total_reward", "steps")


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def episode_from_line(line: str, lineno: int | None = None) -> EpisodeResult:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise FormatError(f"malformed JSON: {e.msg}", lineno) from None
    if not isinstance(obj, dict) or tuple(obj) != _KEYS:
        raise FormatError(f"expected keys {list(_KEYS)} in order", lineno)
    if not isinstance(obj["module_id"], str):
        raise FormatError("module_id must be a string", lineno)
    for k in _KEYS[1:4]:
        if not _is_int(obj[k]):
            raise FormatError(f"{k} must be an integer", lineno)
    steps = []
    if not isinstance(obj["steps"], list):
        raise FormatError("steps must be a list", lineno)
    for i, raw in enumerate(obj["steps"]):
        ok = (
            isinstance(raw, list)
            and len(raw) == 4
            and isinstance(raw[0], list)
            and len(raw[0]) == N_FEATURES
            and all(_is_int(v) for v in raw[0])
            and all(_is_int(v) for v in raw[1:])
            and raw[3] in (0, 1)
        )
        if not ok:
            raise FormatError(f"step {i} is malformed", lineno)
        steps.append(StepRecord(FeatureVector(*raw[0]), raw[1], raw[2], bool(raw[3])))
    ep = EpisodeResult(obj["module_id"], obj["initial_size"], obj["final_size"], obj["total_reward"], steps)
    bad = ep.violations()
    if bad:
        raise FormatError("; ".join(bad), lineno)
    return ep


def dumps_log(episodes: Iterable[EpisodeResult]) -> str:
    return "".join(episode_to_line(ep) + "\n" for ep in episodes)


def loads_log(text: str) -> list[EpisodeResult]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        out.append(episode_from_line(line, lineno))
    return out


def log_stats(episodes: list[EpisodeResult]) -> dict:
    n = len(episodes)
    return {
        "episodes": n,
        "mean_reward": (sum(ep.total_reward for ep in episodes) / n) if n else 0.0,
        "steps": sum(len(ep.steps) for ep in episodes),
    }


def write_log(episodes: list[EpisodeResult], path, sidecar: bool = True) -> None:
    """Write a trajectory log, plus ``<path>.stats.json`` unless disabled."""
    atomic_write_text(path, dumps_log(episodes))
    if sidecar:
        atomic_write_text(str(path) + ".stats.json", json.dumps(log_stats(episodes), sort_keys=True) + "\n")


def read_log(path) -> list[EpisodeResult]:
    return loads_log(Path(path).read_text())
