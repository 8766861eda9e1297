"""REINFORCE on total episode reward, baselined by the heuristic's reward."""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from .. import policy as policy_io
from ..environment import SAMPLE, EpisodeResult, run_episode, write_log
from ..errors import NumericError
from ..policy import MlpPolicy, entropy_and_grad
from .common import (
    IterationRecord,
    TrainerConfig,
    TrainReport,
    WorkerPool,
    argmax_episodes,
    corpus_of,
    derived_rng,
    derived_seed,
    heuristic_episodes,
    make_optimizer,
)
from .evaluate import compare


def _sample_task(args) -> EpisodeResult:
    token, idx, policy, seed, cap = args
    return run_episode(corpus_of(token)[idx], policy, SAMPLE, cap, seed=seed)


def advantage(ep: EpisodeResult, baseline: int) -> float:
    return (ep.total_reward - baseline) / max(1, ep.initial_size)


def batch_arrays(episodes, advantages):
    """Stack non-forced steps; each step carries its episode's advantage."""
    X, A, W = [], [], []
    for ep, adv in zip(episodes, advantages):
        for s in ep.steps:
            if not s.forced:
                X.append(s.features)
                A.append(s.action)
                W.append(adv)
    if not X:
        return np.zeros((0, 11)), np.zeros(0, dtype=np.int64), np.zeros(0)
    return np.array(X, dtype=np.float64), np.array(A, dtype=np.int64), np.array(W)


def pg_gradient(policy: MlpPolicy, X, A, W, n_episodes: int, entropy_bonus: float = 0.0) -> np.ndarray:
    """(1/n) sum_i adv_i sum_t grad log pi(a_t|s_t)  +  beta * grad(mean entropy)."""
    grad = np.zeros(policy.n_params)
    if len(A) == 0:
        return grad
    p = policy.proba(X)
    d = -p
    d[np.arange(len(A)), A] += 1.0
    grad = policy.backward(X, d * (W / n_episodes)[:, None])
    if entropy_bonus:
        grad = grad + entropy_bonus * entropy_and_grad(policy, X)[1]
    return grad


def clipped_surrogate_gradient(
    policy: MlpPolicy, X, A, W, old_logp, clip: float, n_episodes: int, entropy_bonus: float = 0.0
) -> np.ndarray:
    """Gradient of (1/n) sum min(rho*adv, clip(rho, 1-e, 1+e)*adv), rho = pi_new/pi_old."""
    grad = np.zeros(policy.n_params)
    if len(A) == 0:
        return grad
    logp = policy.log_proba(X)
    rows = np.arange(len(A))
    rho = np.exp(logp[rows, A] - old_logp)
    # the min picks the unclipped term (nonzero gradient) unless rho left the band in the advantage's direction
    active = np.where(W >= 0, rho < 1 + clip, rho > 1 - clip)
    d = -np.exp(logp)
    d[rows, A] += 1.0
    scale = np.where(active, W * rho, 0.0) / n_episodes
    grad = policy.backward(X, d * scale[:, None])
    if entropy_bonus:
        grad = grad + entropy_bonus * entropy_and_grad(policy, X)[1]
    return grad


def train_pg(
    corpus,
    warmstart: MlpPolicy | None,
    cfg: TrainerConfig,
    eval_corpus=None,
    checkpoint_dir=None,
    log_dir=None,
) -> tuple[MlpPolicy, TrainReport]:
    """Policy-gradient training from `warmstart` (uniform init when None).

    Each iteration samples ``episodes_per_iteration`` modules with
    replacement, runs one sampled episode on each, and takes one ascent
    step (or ``epochs_per_batch`` clipped-surrogate steps when ``ppo_clip``
    is set).  Evaluation against the heuristic runs every ``eval_every``
    iterations and after the last one.
    """
    cfg.check()
    corpus = list(corpus)
    if warmstart is None:
        warmstart = MlpPolicy.initialize(cfg.hidden, seed=derived_seed(cfg.seed, "init"))
    n = cfg.episodes_per_iteration
    report = TrainReport()
    policy = warmstart
    theta = policy.get_params()
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    episodes_used = 0
    t0 = time.perf_counter()

    with WorkerPool(corpus, cfg.worker_count) as pool:
        base_eps = heuristic_episodes(pool, cfg.heuristic, cfg.cap_factor)
        baselines = [ep.total_reward for ep in base_eps]
        eval_pool = pool if eval_corpus is None else WorkerPool(eval_corpus, cfg.worker_count)
        try:
            eval_base = base_eps if eval_corpus is None else heuristic_episodes(eval_pool, cfg.heuristic, cfg.cap_factor)
            for it in range(cfg.iterations):
                idx = derived_rng(cfg.seed, "pg-batch", it).integers(0, len(corpus), size=n)
                tasks = [
                    (pool.token, int(i), policy, derived_seed(cfg.seed, "pg-episode", it, k), cfg.cap_factor)
                    for k, i in enumerate(idx)
                ]
                eps = pool.map(_sample_task, tasks)
                episodes_used += n
                advs = [advantage(ep, baselines[i]) for ep, i in zip(eps, idx)]
                X, A, W = batch_arrays(eps, advs)

                if cfg.ppo_clip is None:
                    grad = pg_gradient(policy, X, A, W, n, cfg.entropy_bonus)
                    if np.any(grad):
                        theta = opt.step(theta, grad)
                else:
                    old_logp = policy.log_proba(X)[np.arange(len(A)), A] if len(A) else np.zeros(0)
                    cur = policy
                    for _ in range(cfg.epochs_per_batch):
                        grad = clipped_surrogate_gradient(cur, X, A, W, old_logp, cfg.ppo_clip, n, cfg.entropy_bonus)
                        if not np.any(grad):
                            break
                        theta = opt.step(theta, grad)
                        cur = _checked(cur, theta, policy)
                policy = _checked(policy, theta, policy)

                ev = None
                if (cfg.eval_every and (it + 1) % cfg.eval_every == 0) or it == cfg.iterations - 1:
                    ev = compare(eval_base, argmax_episodes(eval_pool, policy, cfg.cap_factor)).reduction_pct
                report.records.append(
                    IterationRecord(
                        it,
                        episodes_used,
                        float(np.mean([ep.total_reward for ep in eps])),
                        float(np.mean(advs)),
                        ev,
                        time.perf_counter() - t0,
                    )
                )
                if checkpoint_dir and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                    policy_io.save(policy, Path(checkpoint_dir) / f"policy-{it + 1:05d}.txt")
                    if log_dir:
                        write_log(eps, Path(log_dir) / f"trajectories-{it + 1:05d}.jsonl")
        finally:
            if eval_pool is not pool:
                eval_pool.close()

    report.policy = policy
    report.extras["baselines"] = baselines
    return policy, report


def _checked(template: MlpPolicy, theta, last_good: MlpPolicy) -> MlpPolicy:
    if not np.all(np.isfinite(theta)):
        raise NumericError("non-finite parameters after update", checkpoint=last_good)
    return template.with_params(theta)
