"""Size reduction of a policy relative to the heuristic, per module and overall."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..environment import run_episode
from ..heuristic import DEFAULT_HEURISTIC, HeuristicParams
from .common import WorkerPool, argmax_episodes, heuristic_episodes, reduction_pct


@dataclass(frozen=True)
class ModuleComparison:
    module_id: str
    initial_size: int
    heuristic_final: int
    policy_final: int

    @property
    def reduction_pct(self) -> float:
        return reduction_pct(self.heuristic_final, self.policy_final)


@dataclass
class EvalReport:
    modules: list[ModuleComparison] = field(default_factory=list)

    @property
    def heuristic_total(self) -> int:
        return sum(m.heuristic_final for m in self.modules)

    @property
    def policy_total(self) -> int:
        return sum(m.policy_final for m in self.modules)

    @property
    def reduction_pct(self) -> float:
        return reduction_pct(self.heuristic_total, self.policy_total)

    @property
    def wins(self) -> int:
        return sum(m.policy_final < m.heuristic_final for m in self.modules)

    @property
    def losses(self) -> int:
        return sum(m.policy_final > m.heuristic_final for m in self.modules)

    @property
    def ties(self) -> int:
        return len(self.modules) - self.wins - self.losses

    def table(self) -> str:
        rows = ["module,initial,heuristic_final,policy_final,reduction_pct"]
        for m in self.modules:
            rows.append(f"{m.module_id},{m.initial_size},{m.heuristic_final},{m.policy_final},{m.reduction_pct:.4f}")
        rows.append(
            f"TOTAL,{sum(m.initial_size for m in self.modules)},{self.heuristic_total},"
            f"{self.policy_total},{self.reduction_pct:.4f}"
        )
        return "\n".join(rows) + "\n"

    def summary(self) -> str:
        return (
            f"modules={len(self.modules)} reduction_pct={self.reduction_pct:.4f} "
            f"wins={self.wins} losses={self.losses} ties={self.ties}"
        )


def compare(heuristic_eps, policy_eps) -> EvalReport:
    return EvalReport(
        [
            ModuleComparison(h.module_id, h.initial_size, h.final_size, p.final_size)
            for h, p in zip(heuristic_eps, policy_eps)
        ]
    )


def evaluate_policy(
    corpus,
    policy=None,
    cap=None,
    heuristic: HeuristicParams = DEFAULT_HEURISTIC,
    workers: int = 1,
    pool: WorkerPool | None = None,
    heuristic_eps=None,
) -> EvalReport:
    """Argmax episodes of `policy` vs the heuristic on every module.

    ``policy=None`` evaluates the heuristic against itself.  Pass
    ``heuristic_eps`` to reuse cached baseline episodes.
    """
    own = pool is None
    if own:
        pool = WorkerPool(corpus, workers)
    try:
        if heuristic_eps is None:
            heuristic_eps = heuristic_episodes(pool, heuristic, cap)
        if policy is None:
            policy_eps = heuristic_eps
        elif callable(policy) and not hasattr(policy, "act"):
            policy_eps = [run_episode(m, policy, cap_factor=cap) for m in pool.corpus]
        else:
            policy_eps = argmax_episodes(pool, policy, cap)
    finally:
        if own:
            pool.close()
    return compare(heuristic_eps, policy_eps)
