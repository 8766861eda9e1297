"""Behavioral cloning: fit the policy network to the heuristic's decisions."""

from __future__ import annotations

import time

import numpy as np

from ..errors import ParameterError
from ..features import corpus_stats
from ..policy import MlpPolicy
from .common import (
    IterationRecord,
    TrainerConfig,
    TrainReport,
    WorkerPool,
    derived_rng,
    derived_seed,
    heuristic_episodes,
    make_optimizer,
)


def split_indices(n: int, holdout_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded module-level train/held-out split (held-out gets at least one module if n > 1)."""
    perm = derived_rng(seed, "split").permutation(n)
    n_hold = int(round(n * holdout_fraction))
    if n > 1:
        n_hold = min(max(n_hold, 1), n - 1)
    else:
        n_hold = 0
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def decision_arrays(episodes) -> tuple[np.ndarray, np.ndarray]:
    steps = [s for ep in episodes for s in ep.steps if not s.forced]
    if not steps:
        return np.zeros((0, 11)), np.zeros(0, dtype=np.int64)
    return (
        np.array([s.features for s in steps], dtype=np.float64),
        np.array([s.action for s in steps], dtype=np.int64),
    )


def cross_entropy(policy: MlpPolicy, X, y) -> float:
    return float(-policy.log_proba(X)[np.arange(len(y)), y].mean())


def agreement(policy: MlpPolicy, X, y) -> float:
    if len(y) == 0:
        return float("nan")
    p = policy.proba(X)
    return float(np.mean((p[:, 1] > p[:, 0]).astype(np.int64) == y))


def train_bc(corpus, cfg: TrainerConfig, pool: WorkerPool | None = None) -> tuple[MlpPolicy, TrainReport]:
    """Full-batch cross-entropy fit to heuristic actions on a module split.

    The report's extras carry the loss history, train/held-out step
    agreement, and the feature stats baked into the returned policy.
    """
    cfg.check()
    corpus = list(corpus)
    if not corpus:
        raise ParameterError("corpus is empty")
    own = pool is None
    if own:
        pool = WorkerPool(corpus, cfg.worker_count)
    try:
        episodes = heuristic_episodes(pool, cfg.heuristic, cfg.cap_factor)
    finally:
        if own:
            pool.close()

    train_idx, hold_idx = split_indices(len(corpus), cfg.holdout_fraction, cfg.seed)
    train_eps = [episodes[i] for i in train_idx]
    hold_eps = [episodes[i] for i in hold_idx]
    X, y = decision_arrays(train_eps)
    Xh, yh = decision_arrays(hold_eps)
    if len(y) == 0:
        raise ParameterError("training split has zero decision points")

    stats = corpus_stats(X.astype(np.int64))
    policy = MlpPolicy.initialize(cfg.hidden, stats, seed=derived_seed(cfg.seed, "init"))
    theta = policy.get_params()
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    onehot = np.eye(2)[y]
    mean_heur = float(np.mean([ep.total_reward for ep in train_eps]))

    report = TrainReport()
    losses = []
    t0 = time.perf_counter()
    for it in range(cfg.iterations):
        cur = policy.with_params(theta)
        logp = cur.log_proba(X)
        losses.append(float(-logp[np.arange(len(y)), y].mean()))
        # ascend mean log-likelihood == descend cross-entropy
        grad = cur.backward(X, (onehot - np.exp(logp)) / len(y))
        theta = opt.step(theta, grad)
        report.records.append(
            IterationRecord(it, (it + 1) * len(train_eps), mean_heur, 0.0, None, time.perf_counter() - t0)
        )
    policy = policy.with_params(theta)
    report.policy = policy
    report.extras.update(
        loss_history=losses,
        final_loss=cross_entropy(policy, X, y),
        train_accuracy=agreement(policy, X, y),
        heldout_accuracy=agreement(policy, Xh, yh),
        train_modules=train_idx.tolist(),
        heldout_modules=hold_idx.tolist(),
        decision_points=int(len(y)),
    )
    return policy, report
