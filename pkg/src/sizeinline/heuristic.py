"""Cost-versus-threshold inlining rule used as the size baseline."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class HeuristicParams:
    base_threshold: int = 25
    single_block_bonus: int = 15

    def __post_init__(self):
        if self.base_threshold < 0 or self.single_block_bonus < 0:
            raise ParameterError("heuristic threshold and bonus must be >= 0")

    def threshold(self, callee_basic_block_count: int) -> int:
        bonus = self.single_block_bonus if callee_basic_block_count == 1 else 0
        return self.base_threshold + bonus


DEFAULT_HEURISTIC = HeuristicParams()


def heuristic_decide(f, p: HeuristicParams = DEFAULT_HEURISTIC) -> int:
    """Inline (1) iff the post-inlining cost fits under the threshold.

    Looks only at ``callee_basic_block_count`` and ``cost_estimate`` of the
    feature vector.
    """
    return int(f.cost_estimate <= p.threshold(f.callee_basic_block_count))


def heuristic_policy(p: HeuristicParams = DEFAULT_HEURISTIC):
    """Return a decide-function closure suitable for ``run_episode``."""

    def decide(f):
        return heuristic_decide(f, p)

    decide.params = p
    return decide
