"""Exhaustive search for the size-optimal decision sequence on small modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .environment import Traversal, over_cap, run_episode
from .errors import DepthExceededError
from .irmodel import ModuleGraph

DEFAULT_MAX_DECISIONS = 14


@dataclass
class OracleResult:
    optimal_final_size: int
    optimal_action_sequence: list[int] = field(default_factory=list)
    nodes_explored: int = 0

    def to_text(self) -> str:
        seq = "".join(map(str, self.optimal_action_sequence)) or "-"
        return (
            f"optimal_final_size {self.optimal_final_size}\n"
            f"optimal_action_sequence {seq}\n"
            f"nodes_explored {self.nodes_explored}\n"
        )


def replay_policy(actions):
    """Decide-function that plays back a fixed sequence of (non-forced) decisions."""
    it = iter(actions)
    return lambda f: next(it)


def brute_force_optimal(m: ModuleGraph, max_decisions: int = DEFAULT_MAX_DECISIONS, cap_factor=None) -> OracleResult:
    """Depth-first search over every adaptive inline/no-inline sequence.

    Decisions past the growth cap are forced to 0 and do not branch.  The
    no-inline branch is explored first and only strict improvements replace
    the incumbent, so ties go to the sequence with the earliest 0s.
    """
    cap = Fraction(m.growth_cap_factor if cap_factor is None else cap_factor)
    root = m.copy()
    initial = root.size
    best_size = None
    best_seq: list[int] = []
    nodes = 0

    def descend(module: ModuleGraph, trav: Traversal, seq: list[int]):
        nonlocal best_size, best_seq, nodes
        nodes += 1
        for c in trav:
            if over_cap(module, initial, cap):
                continue
            if len(seq) >= max_decisions:
                raise DepthExceededError(
                    f"{m.name}: more than {max_decisions} decisions on one path"
                )
            # inline branch on a fork; this module/traversal continues as the 0 branch
            forked = module.copy()
            forked_trav = trav.fork(forked)
            forked.inline(c.id)
            descend(module, trav, seq + [0])
            descend(forked, forked_trav, seq + [1])
            return
        if best_size is None or module.size < best_size:
            best_size = module.size
            best_seq = seq

    descend(root, Traversal(root), [])
    return OracleResult(best_size, best_seq, nodes)


def replay(m: ModuleGraph, result: OracleResult, cap_factor=None):
    return run_episode(m, replay_policy(result.optimal_action_sequence), cap_factor=cap_factor)
