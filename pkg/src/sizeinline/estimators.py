"""scikit-learn style wrappers: inliners as classifiers over feature rows.

``fit`` takes a corpus (a sequence of ModuleGraph); ``predict`` and
``predict_proba`` take an ``(n_samples, 11)`` feature matrix in canonical
order and return inline decisions (1) or their probabilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .environment import EpisodeResult, run_episode
from .errors import ParameterError
from .features import N_FEATURES, FeatureStats, corpus_stats
from .heuristic import HeuristicParams, heuristic_policy
from .irmodel import ModuleGraph
from .policy import DEFAULT_HIDDEN, MlpPolicy
from .trainers.bc import train_bc
from .trainers.common import TrainerConfig
from .trainers.es import train_es
from .trainers.evaluate import EvalReport, evaluate_policy
from .trainers.pg import train_pg


def check_features(X) -> np.ndarray:
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} features per row, got {X.shape[1]}")
    return X


def check_corpus(corpus) -> list[ModuleGraph]:
    if isinstance(corpus, ModuleGraph):
        corpus = [corpus]
    corpus = list(corpus)
    if not corpus:
        raise ParameterError("corpus is empty")
    for m in corpus:
        if not isinstance(m, ModuleGraph):
            raise TypeError(f"corpus entries must be ModuleGraph, got {type(m).__name__}")
    return corpus


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Z-normalizes feature rows with stats gathered from heuristic episodes."""

    def __init__(self, base_threshold=25, single_block_bonus=15):
        self.base_threshold = base_threshold
        self.single_block_bonus = single_block_bonus

    def fit(self, X, y=None):
        if len(X) and isinstance(X[0], (ModuleGraph, EpisodeResult)):
            items = X
            if isinstance(X[0], ModuleGraph):
                decide = heuristic_policy(HeuristicParams(self.base_threshold, self.single_block_bonus))
                items = [run_episode(m, decide) for m in X]
            self.stats_ = corpus_stats(items)
        else:
            self.stats_ = corpus_stats(check_features(X).astype(np.int64))
        self.n_features_in_ = N_FEATURES
        return self

    def transform(self, X):
        check_is_fitted(self, "stats_")
        X = check_features(X)
        return (X - np.asarray(self.stats_.mean)) / np.asarray(self.stats_.std)


class _InlinerMixin(ClassifierMixin):
    """predict/decide plumbing shared by every inliner."""

    def _decide_rows(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X):
        return self._decide_rows(check_features(X))

    def decide(self, f) -> int:
        return int(self._decide_rows(np.asarray([f], dtype=np.float64))[0])

    def __call__(self, f) -> int:
        return self.decide(f)

    def evaluate(self, corpus, cap=None) -> EvalReport:
        """Size reduction vs the heuristic on `corpus` (argmax episodes)."""
        corpus = check_corpus(corpus)
        policy = getattr(self, "policy_", None)
        return evaluate_policy(corpus, policy if policy is not None else self.decide, cap=cap)


class HeuristicInliner(_InlinerMixin, BaseEstimator):
    def __init__(self, base_threshold=25, single_block_bonus=15):
        self.base_threshold = base_threshold
        self.single_block_bonus = single_block_bonus

    def fit(self, X=None, y=None):
        self.params_ = HeuristicParams(self.base_threshold, self.single_block_bonus)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = N_FEATURES
        return self

    def _decide_rows(self, X):
        p = getattr(self, "params_", None) or HeuristicParams(self.base_threshold, self.single_block_bonus)
        cost = X[:, 7]
        single = X[:, 3] == 1
        thresh = p.base_threshold + np.where(single, p.single_block_bonus, 0)
        return (cost <= thresh).astype(np.int64)


class _PolicyInliner(_InlinerMixin, BaseEstimator):
    def _config(self, algo) -> TrainerConfig:
        kw = {k: v for k, v in self.get_params().items() if k in TrainerConfig.__dataclass_fields__}
        kw["heuristic"] = HeuristicParams(self.base_threshold, self.single_block_bonus)
        kw["hidden"] = tuple(self.hidden)
        return TrainerConfig(algo=algo, **kw)

    def _set_fitted(self, policy, report):
        self.policy_ = policy
        self.report_ = report
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = N_FEATURES
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "policy_")
        return self.policy_.proba(check_features(X))

    def _decide_rows(self, X):
        check_is_fitted(self, "policy_")
        p = self.policy_.proba(X)
        return (p[:, 1] > p[:, 0]).astype(np.int64)

    @property
    def stats_(self) -> FeatureStats:
        check_is_fitted(self, "policy_")
        return self.policy_.stats


def _warm_policy(warm_start):
    if warm_start is None or isinstance(warm_start, MlpPolicy):
        return warm_start
    check_is_fitted(warm_start, "policy_")
    return warm_start.policy_


class BCInliner(_PolicyInliner):
    """Imitates the heuristic's decisions; the usual warm start for RL."""

    def __init__(
        self,
        hidden=DEFAULT_HIDDEN,
        iterations=300,
        learning_rate=0.01,
        holdout_fraction=0.2,
        optimizer="adam",
        base_threshold=25,
        single_block_bonus=15,
        cap_factor="3/2",
        seed=0,
        worker_count=1,
    ):
        self.hidden = hidden
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.holdout_fraction = holdout_fraction
        self.optimizer = optimizer
        self.base_threshold = base_threshold
        self.single_block_bonus = single_block_bonus
        self.cap_factor = cap_factor
        self.seed = seed
        self.worker_count = worker_count

    def fit(self, X, y=None):
        policy, report = train_bc(check_corpus(X), self._config("bc"))
        self.heldout_accuracy_ = report.extras["heldout_accuracy"]
        return self._set_fitted(policy, report)


class PGInliner(_PolicyInliner):
    """REINFORCE with the heuristic's reward as baseline."""

    def __init__(
        self,
        warm_start=None,
        hidden=DEFAULT_HIDDEN,
        iterations=100,
        episodes_per_iteration=32,
        learning_rate=3e-3,
        entropy_bonus=0.01,
        ppo_clip=None,
        epochs_per_batch=3,
        optimizer="adam",
        base_threshold=25,
        single_block_bonus=15,
        cap_factor="3/2",
        eval_every=10,
        seed=0,
        worker_count=1,
    ):
        self.warm_start = warm_start
        self.hidden = hidden
        self.iterations = iterations
        self.episodes_per_iteration = episodes_per_iteration
        self.learning_rate = learning_rate
        self.entropy_bonus = entropy_bonus
        self.ppo_clip = ppo_clip
        self.epochs_per_batch = epochs_per_batch
        self.optimizer = optimizer
        self.base_threshold = base_threshold
        self.single_block_bonus = single_block_bonus
        self.cap_factor = cap_factor
        self.eval_every = eval_every
        self.seed = seed
        self.worker_count = worker_count

    def fit(self, X, y=None):
        policy, report = train_pg(check_corpus(X), _warm_policy(self.warm_start), self._config("pg"))
        return self._set_fitted(policy, report)


class ESInliner(_PolicyInliner):
    """Evolution strategies over the flattened network parameters."""

    def __init__(
        self,
        warm_start=None,
        hidden=DEFAULT_HIDDEN,
        iterations=100,
        learning_rate=3e-3,
        es_sigma=0.05,
        es_population=16,
        es_batch_size=8,
        fitness_centering=True,
        optimizer="adam",
        base_threshold=25,
        single_block_bonus=15,
        cap_factor="3/2",
        eval_every=10,
        seed=0,
        worker_count=1,
    ):
        self.warm_start = warm_start
        self.hidden = hidden
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.es_sigma = es_sigma
        self.es_population = es_population
        self.es_batch_size = es_batch_size
        self.fitness_centering = fitness_centering
        self.optimizer = optimizer
        self.base_threshold = base_threshold
        self.single_block_bonus = single_block_bonus
        self.cap_factor = cap_factor
        self.eval_every = eval_every
        self.seed = seed
        self.worker_count = worker_count

    def fit(self, X, y=None):
        policy, report = train_es(check_corpus(X), _warm_policy(self.warm_start), self._config("es"))
        return self._set_fitted(policy, report)
