"""Shared training plumbing: config, reports, optimizers, worker pools, seeds."""

from __future__ import annotations

import dataclasses
import itertools
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from ..environment import ARGMAX, EpisodeResult, run_episode
from ..errors import ParameterError
from ..heuristic import HeuristicParams, heuristic_policy
from ..irmodel import ModuleGraph
from ..policy import DEFAULT_HIDDEN, MlpPolicy

ALGOS = ("bc", "pg", "es")
OPTIMIZERS = ("adam", "sgd")
ALGO_DEFAULTS = {
    "bc": {"iterations": 300, "learning_rate": 0.01},
    "pg": {"iterations": 100, "learning_rate": 3e-3},
    "es": {"iterations": 100, "learning_rate": 3e-3},
}


@dataclass
class TrainerConfig:
    algo: str = "pg"
    iterations: int = 100
    episodes_per_iteration: int = 32
    learning_rate: float = 3e-3
    es_sigma: float = 0.05
    es_population: int = 16
    es_batch_size: int = 8
    entropy_bonus: float = 0.01
    ppo_clip: float | None = None
    epochs_per_batch: int = 3
    seed: int = 0
    worker_count: int = 1
    cap_factor: str = "3/2"
    heuristic: HeuristicParams = field(default_factory=HeuristicParams)
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    optimizer: str = "adam"
    fitness_centering: bool = True
    holdout_fraction: float = 0.2
    eval_every: int = 10
    checkpoint_every: int = 0

    def check(self):
        if self.algo not in ALGOS:
            raise ParameterError(f"algo must be one of {ALGOS}")
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError(f"optimizer must be one of {OPTIMIZERS}")
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be > 0")
        if not self.es_sigma > 0:
            raise ParameterError("es_sigma must be > 0")
        if self.iterations < 0:
            raise ParameterError("iterations must be >= 0")
        if self.episodes_per_iteration < 1 or self.es_batch_size < 1:
            raise ParameterError("episode counts must be >= 1")
        if self.es_population < 2 or self.es_population % 2:
            raise ParameterError("es_population must be an even number >= 2 (antithetic pairs)")
        if self.entropy_bonus < 0:
            raise ParameterError("entropy_bonus must be >= 0")
        if self.ppo_clip is not None and not 0 < self.ppo_clip < 1:
            raise ParameterError("ppo_clip must be in (0, 1)")
        if self.epochs_per_batch < 1 or self.worker_count < 1:
            raise ParameterError("epochs_per_batch and worker_count must be >= 1")
        if not 0 < self.holdout_fraction < 1:
            raise ParameterError("holdout_fraction must be in (0, 1)")
        try:
            if Fraction(self.cap_factor) <= 1:
                raise ParameterError("cap_factor must be > 1")
        except (ValueError, ZeroDivisionError):
            raise ParameterError(f"bad cap_factor {self.cap_factor!r}") from None
        return self

    @classmethod
    def for_algo(cls, algo: str, **overrides) -> "TrainerConfig":
        """Config with the per-algorithm defaults, then `overrides`."""
        kw = dict(ALGO_DEFAULTS.get(algo, {}))
        kw.update(overrides)
        return cls(algo=algo, **kw)

    def replace(self, **kw) -> "TrainerConfig":
        return dataclasses.replace(self, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainerConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ParameterError(f"unknown trainer settings: {sorted(unknown)}")
        kw = dict(d)
        if isinstance(kw.get("heuristic"), dict):
            kw["heuristic"] = HeuristicParams(**kw["heuristic"])
        if "hidden" in kw:
            kw["hidden"] = tuple(kw["hidden"])
        if "cap_factor" in kw:
            kw["cap_factor"] = str(kw["cap_factor"])
        return cls(**kw)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    episodes: int
    mean_reward: float
    mean_advantage: float
    eval_reduction_pct: float | None
    wall_seconds: float


METRICS_HEADER = "iteration,episodes,mean_reward,mean_advantage,eval_reduction_pct,wall_seconds"


@dataclass
class TrainReport:
    records: list[IterationRecord] = field(default_factory=list)
    policy: MlpPolicy | None = None
    extras: dict = field(default_factory=dict)

    def metrics_csv(self, timing: bool = True) -> str:
        """Metrics rows; with ``timing=False`` the wall-clock column is zeroed
        so reruns are byte-comparable."""
        rows = [METRICS_HEADER]
        for r in self.records:
            ev = "" if r.eval_reduction_pct is None else repr(float(r.eval_reduction_pct))
            wall = f"{r.wall_seconds:.3f}" if timing else "0"
            rows.append(
                f"{r.iteration},{r.episodes},{float(r.mean_reward)!r},{float(r.mean_advantage)!r},{ev},{wall}"
            )
        return "\n".join(rows) + "\n"

    def episodes_to_reach(self, pct: float) -> int | None:
        """Episodes consumed at the first evaluation reporting >= pct reduction."""
        for r in self.records:
            if r.eval_reduction_pct is not None and r.eval_reduction_pct >= pct:
                return r.episodes
        return None


# -- optimizers ------------------------------------------------------------------


class Adam:
    """Adaptive-moment gradient ascent."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta, grad):
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return theta + self.lr * mhat / (np.sqrt(vhat) + self.eps)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, theta, grad):
        return theta + self.lr * grad


def make_optimizer(name, lr):
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return SGD(lr)
    raise ParameterError(f"unknown optimizer {name!r}")


# -- seeds -------------------------------------------------------------------------

_STREAMS = {"split": 1, "init": 2, "pg-batch": 3, "pg-episode": 4, "es-noise": 5, "es-batch": 6}


def derived_seed(seed: int, stream: str, *path: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(_STREAMS[stream], *path))
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def derived_rng(seed: int, stream: str, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STREAMS[stream], *path)))


# -- worker pools ------------------------------------------------------------------

_CORPORA: dict[int, list[ModuleGraph]] = {}
_tokens = itertools.count(1)


def _install(token, corpus):
    _CORPORA[token] = corpus


def corpus_of(token) -> list[ModuleGraph]:
    return _CORPORA[token]


class WorkerPool:
    """Order-preserving map over a fixed corpus.

    With one worker everything runs in-process.  Otherwise the corpus is
    shipped once per worker at startup and tasks refer to modules by index.
    Results come back in task order, so numerics do not depend on scheduling.
    """

    def __init__(self, corpus: Sequence[ModuleGraph], workers: int = 1):
        self.token = next(_tokens)
        self.corpus = list(corpus)
        self.workers = workers
        _install(self.token, self.corpus)
        self._ex = None
        if workers > 1:
            self._ex = ProcessPoolExecutor(
                max_workers=workers,
                mp_context=multiprocessing.get_context("fork"),
                initializer=_install,
                initargs=(self.token, self.corpus),
            )

    def map(self, fn: Callable, tasks: list) -> list:
        if self._ex is None:
            return [fn(t) for t in tasks]
        chunk = max(1, math.ceil(len(tasks) / (4 * self.workers)))
        return list(self._ex.map(fn, tasks, chunksize=chunk))

    def close(self):
        if self._ex is not None:
            self._ex.shutdown()
            self._ex = None
        _CORPORA.pop(self.token, None)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _heuristic_task(args) -> EpisodeResult:
    token, idx, params, cap = args
    return run_episode(corpus_of(token)[idx], heuristic_policy(params), ARGMAX, cap)


def _argmax_task(args) -> EpisodeResult:
    token, idx, policy, cap = args
    return run_episode(corpus_of(token)[idx], policy, ARGMAX, cap)


def heuristic_episodes(pool: WorkerPool, params: HeuristicParams, cap) -> list[EpisodeResult]:
    return pool.map(_heuristic_task, [(pool.token, i, params, cap) for i in range(len(pool.corpus))])


def argmax_episodes(pool: WorkerPool, policy, cap) -> list[EpisodeResult]:
    return pool.map(_argmax_task, [(pool.token, i, policy, cap) for i in range(len(pool.corpus))])


def reduction_pct(heuristic_final: int, policy_final: int) -> float:
    if heuristic_final == 0:
        return 0.0
    return 100.0 * (heuristic_final - policy_final) / heuristic_final
