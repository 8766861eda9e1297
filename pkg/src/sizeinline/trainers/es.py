"""Evolution strategies with antithetic Gaussian perturbations."""

from __future__ import annotations

import time
from pathlib import Path
from typing import Callable

import numpy as np

from .. import policy as policy_io
from ..environment import ARGMAX, run_episode
from ..errors import NumericError, ParameterError
from ..policy import MlpPolicy
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


def antithetic_noise(rng: np.random.Generator, population: int, dim: int) -> np.ndarray:
    """``population`` rows: half standard-normal draws, then their negations."""
    if population < 2 or population % 2:
        raise ParameterError("population must be an even number >= 2")
    half = rng.standard_normal((population // 2, dim))
    return np.concatenate([half, -half])


def es_gradient(fitness, noise, sigma: float, centering: bool = True) -> np.ndarray:
    """(1/(n sigma)) sum_i F_i eps_i, optionally with F centered on its batch mean."""
    F = np.asarray(fitness, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if centering:
        F = F - F.mean()
    return (F @ noise) / (len(F) * sigma)


def es_optimize(
    objective: Callable[[np.ndarray], float],
    theta0,
    iterations: int,
    learning_rate: float,
    sigma: float,
    population: int,
    seed: int = 0,
    centering: bool = True,
    optimizer: str = "sgd",
) -> np.ndarray:
    """Maximize a black-box objective over a flat vector."""
    theta = np.array(theta0, dtype=np.float64)
    opt = make_optimizer(optimizer, learning_rate)
    for it in range(iterations):
        eps = antithetic_noise(derived_rng(seed, "es-noise", it), population, theta.size)
        F = [objective(theta + sigma * e) for e in eps]
        theta = opt.step(theta, es_gradient(F, eps, sigma, centering))
    return theta


def _fitness_task(args) -> tuple[float, float]:
    token, indices, policy, cap = args
    corpus = corpus_of(token)
    normalized, raw = [], []
    for i in indices:
        ep = run_episode(corpus[i], policy, ARGMAX, cap)
        normalized.append(ep.total_reward / max(1, ep.initial_size))
        raw.append(ep.total_reward)
    return float(np.mean(normalized)), float(np.mean(raw))


def train_es(
    corpus,
    init: MlpPolicy | None,
    cfg: TrainerConfig,
    eval_corpus=None,
    checkpoint_dir=None,
) -> tuple[MlpPolicy, TrainReport]:
    """Each iteration scores ``es_population`` perturbed policies on one
    shared seeded batch of ``es_batch_size`` modules and steps along the
    smoothed-gradient estimate.  Only scalar returns are used."""
    cfg.check()
    corpus = list(corpus)
    if init is None:
        init = MlpPolicy.initialize(cfg.hidden, seed=derived_seed(cfg.seed, "init"))
    policy = init
    theta = policy.get_params()
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    report = TrainReport()
    episodes_used = 0
    t0 = time.perf_counter()

    with WorkerPool(corpus, cfg.worker_count) as pool:
        eval_pool = pool if eval_corpus is None else WorkerPool(eval_corpus, cfg.worker_count)
        try:
            base_norm = [
                ep.total_reward / max(1, ep.initial_size)
                for ep in heuristic_episodes(pool, cfg.heuristic, cfg.cap_factor)
            ]
            eval_base = heuristic_episodes(eval_pool, cfg.heuristic, cfg.cap_factor)
            for it in range(cfg.iterations):
                eps = antithetic_noise(derived_rng(cfg.seed, "es-noise", it), cfg.es_population, theta.size)
                batch = derived_rng(cfg.seed, "es-batch", it).integers(0, len(corpus), size=cfg.es_batch_size)
                batch = [int(i) for i in batch]
                tasks = [
                    (pool.token, batch, policy.with_params(theta + cfg.es_sigma * e), cfg.cap_factor) for e in eps
                ]
                results = pool.map(_fitness_task, tasks)
                episodes_used += len(tasks) * len(batch)
                F = np.array([r[0] for r in results])
                theta = opt.step(theta, es_gradient(F, eps, cfg.es_sigma, cfg.fitness_centering))
                if not np.all(np.isfinite(theta)):
                    raise NumericError("non-finite parameters after ES update", checkpoint=policy)
                policy = policy.with_params(theta)

                ev = None
                if (cfg.eval_every and (it + 1) % cfg.eval_every == 0) or it == cfg.iterations - 1:
                    ev = compare(eval_base, argmax_episodes(eval_pool, policy, cfg.cap_factor)).reduction_pct
                report.records.append(
                    IterationRecord(
                        it,
                        episodes_used,
                        float(np.mean([r[1] for r in results])),
                        float(F.mean() - np.mean([base_norm[i] for i in batch])),
                        ev,
                        time.perf_counter() - t0,
                    )
                )
                if checkpoint_dir and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                    policy_io.save(policy, Path(checkpoint_dir) / f"policy-{it + 1:05d}.txt")
        finally:
            if eval_pool is not pool:
                eval_pool.close()

    report.policy = policy
    return policy, report
