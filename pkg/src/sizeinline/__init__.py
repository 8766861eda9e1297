"""Learned inlining-for-size on a simulated call-graph compiler."""

from .corpusgen import CorpusParams, gen_corpus
from .environment import EpisodeResult, StepRecord, run_episode, traversal_order
from .estimators import BCInliner, ESInliner, FeatureScaler, HeuristicInliner, PGInliner
from .features import FeatureVector, compute_heights, corpus_stats, extract_features
from .heuristic import HeuristicParams, heuristic_decide, heuristic_policy
from .irmodel import CallSite, FunctionDef, ModuleGraph, inline, module_size, reference_module
from .oracle import brute_force_optimal
from .policy import MlpPolicy
from .trainers import TrainerConfig, evaluate_policy, train_bc, train_es, train_pg

__version__ = "0.1.0"
