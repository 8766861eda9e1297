import numpy as np
import pytest

from sizeinline import policy as policy_io
from sizeinline.errors import ParameterError
from sizeinline.heuristic import DEFAULT_HEURISTIC, heuristic_policy
from sizeinline.irmodel import EXTERNAL, INTERNAL, CallSite, FunctionDef, ModuleGraph
from sizeinline.oracle import replay_policy
from sizeinline.policy import MlpPolicy
from sizeinline.trainers import TrainerConfig, evaluate_policy, train_bc, train_es, train_pg
from sizeinline.trainers.bc import split_indices
from sizeinline.trainers.common import SGD, Adam, derived_seed
from sizeinline.trainers.es import antithetic_noise, es_gradient, es_optimize
from sizeinline.trainers.pg import pg_gradient


def uniform_policy(hidden=(4,)):
    return MlpPolicy.initialize(hidden, seed=3)


# -- behavioral cloning -----------------------------------------------------------


def test_bc_zero_iterations_returns_init(small_corpus):
    cfg = TrainerConfig.for_algo("bc", iterations=0, seed=4)
    policy, report = train_bc(small_corpus, cfg)
    init = MlpPolicy.initialize(cfg.hidden, policy.stats, seed=derived_seed(cfg.seed, "init"))
    assert policy == init
    assert report.records == []


def test_bc_deterministic(small_corpus):
    cfg = TrainerConfig.for_algo("bc", iterations=20, seed=2)
    a, ra = train_bc(small_corpus, cfg)
    b, rb = train_bc(small_corpus, cfg)
    assert policy_io.dumps(a) == policy_io.dumps(b)
    assert ra.metrics_csv(timing=False) == rb.metrics_csv(timing=False)


def test_bc_loss_non_increasing_with_small_sgd_steps(small_corpus):
    cfg = TrainerConfig.for_algo("bc", iterations=60, learning_rate=0.05, optimizer="sgd", seed=1)
    _, report = train_bc(small_corpus, cfg)
    losses = report.extras["loss_history"]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_bc_learns_heuristic(small_corpus):
    _, report = train_bc(small_corpus, TrainerConfig.for_algo("bc", iterations=150, seed=0))
    assert report.extras["train_accuracy"] >= 0.9


def test_split_is_disjoint_and_seeded():
    tr, ho = split_indices(50, 0.2, 7)
    assert len(ho) == 10 and not set(tr) & set(ho)
    assert sorted(tr.tolist() + ho.tolist()) == list(range(50))
    tr2, ho2 = split_indices(50, 0.2, 7)
    assert np.array_equal(ho, ho2)


# -- policy gradient --------------------------------------------------------------


def test_pg_gradient_zero_when_advantages_zero():
    p = uniform_policy()
    X = np.arange(33, dtype=float).reshape(3, 11)
    g = pg_gradient(p, X, np.array([0, 1, 1]), np.zeros(3), 3, entropy_bonus=0.0)
    assert not np.any(g)


def test_pg_zero_advantage_leaves_params_unchanged():
    # the only call site is far too costly for the heuristic, and the warm
    # start never inlines, so every episode reward equals its baseline
    m = ModuleGraph(
        [
            FunctionDef("main", EXTERNAL, 10, 1, 0, [], [CallSite("c", "main", "big", ())]),
            FunctionDef("big", INTERNAL, 100, 3, 1, [], []),
        ]
    )
    warm = MlpPolicy.initialize((4,), seed=1)
    theta = np.zeros(warm.n_params)
    theta[-2] = 50.0  # "no inline" logit bias
    warm = warm.with_params(theta)
    cfg = TrainerConfig.for_algo("pg", iterations=3, episodes_per_iteration=4, entropy_bonus=0.0, hidden=(4,))
    policy, report = train_pg([m], warm, cfg)
    assert all(r.mean_advantage == 0.0 for r in report.records)
    assert np.array_equal(policy.get_params(), warm.get_params())


def bandit_gradient(policy, rng, baseline=0.5):
    x = np.zeros((1, 11))
    p1 = policy.forward(x[0])[1]
    a = int(rng.random() < p1)
    r = float(a)  # inline pays 1, no-inline pays 0
    return pg_gradient(policy, x, np.array([a]), np.array([r - baseline]), 1)


def test_pg_bandit_converges_to_better_arm():
    p = uniform_policy()
    opt = SGD(0.5)
    theta = p.get_params()
    rng = np.random.default_rng(0)
    for _ in range(400):
        theta = opt.step(theta, bandit_gradient(p.with_params(theta), rng))
    assert p.with_params(theta).forward([0] * 11)[1] > 0.95


def test_pg_bandit_mean_gradient_matches_expectation():
    # E[(r - b) d log pi(a)/d b_1] = p1 (1 - p1) (r1 - r0) = 0.25 for the uniform policy
    p = uniform_policy()
    rng = np.random.default_rng(1)
    samples = np.array([bandit_gradient(p, rng)[-1] for _ in range(10_000)])
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    assert abs(samples.mean() - 0.25) <= 3 * se


def test_pg_worker_count_does_not_change_results(small_corpus):
    cfg = TrainerConfig.for_algo("pg", iterations=3, episodes_per_iteration=8, eval_every=2, seed=9)
    a, ra = train_pg(small_corpus, None, cfg)
    b, rb = train_pg(small_corpus, None, cfg.replace(worker_count=4))
    assert policy_io.dumps(a) == policy_io.dumps(b)
    assert ra.metrics_csv(timing=False) == rb.metrics_csv(timing=False)


def test_pg_ppo_variant_runs_and_moves(small_corpus):
    cfg = TrainerConfig.for_algo("pg", iterations=3, episodes_per_iteration=8, ppo_clip=0.2, seed=3)
    warm = MlpPolicy.initialize(cfg.hidden, seed=0)
    policy, report = train_pg(small_corpus, warm, cfg)
    assert np.all(np.isfinite(policy.get_params()))
    assert len(report.records) == 3
    assert report.records[-1].eval_reduction_pct is not None


def test_pg_records_and_checkpoints(small_corpus, tmp_path):
    cfg = TrainerConfig.for_algo("pg", iterations=4, episodes_per_iteration=4, eval_every=2, checkpoint_every=2)
    policy, report = train_pg(small_corpus, None, cfg, checkpoint_dir=tmp_path, log_dir=tmp_path)
    assert [r.episodes for r in report.records] == [4, 8, 12, 16]
    assert [r.eval_reduction_pct is not None for r in report.records] == [False, True, False, True]
    assert policy_io.load(tmp_path / "policy-00004.txt") == policy
    assert (tmp_path / "trajectories-00002.jsonl").exists()


# -- evolution strategies ---------------------------------------------------------


def test_es_linear_objective_exact():
    g = es_gradient([1.0, -1.0], np.array([[1.0], [-1.0]]), sigma=1.0, centering=False)
    assert g.tolist() == [1.0]


def test_es_linear_objective_exact_vector():
    c = np.array([2.0, -3.0, 0.5])
    eps = antithetic_noise(np.random.default_rng(0), 8, 3)
    theta = np.array([0.3, 0.1, -1.0])
    sigma = 0.2
    F = [c @ (theta + sigma * e) for e in eps]
    g = es_gradient(F, eps, sigma, centering=False)
    np.testing.assert_allclose(g, eps.T @ eps @ c / len(eps), rtol=1e-12)


def test_es_constant_shift_invariant():
    eps = antithetic_noise(np.random.default_rng(1), 10, 4)
    F = np.random.default_rng(2).normal(size=10)
    for centering in (True, False):
        # antithetic pairs cancel a constant even without centering
        np.testing.assert_allclose(
            es_gradient(F, eps, 0.1, centering), es_gradient(F + 123.0, eps, 0.1, centering), atol=1e-9
        )


def test_es_quadratic_converges():
    theta = es_optimize(lambda t: -float(t @ t), np.ones(10), 2000, 0.05, 0.1, 20, seed=0)
    assert np.linalg.norm(theta) <= 1e-3


def test_antithetic_noise_rejects_odd_population():
    with pytest.raises(ParameterError):
        antithetic_noise(np.random.default_rng(0), 3, 2)


def test_es_training_finite_and_deterministic(small_corpus):
    cfg = TrainerConfig.for_algo("es", iterations=2, es_population=4, es_batch_size=2, seed=5)
    a, ra = train_es(small_corpus, None, cfg)
    b, rb = train_es(small_corpus, None, cfg.replace(worker_count=3))
    assert np.all(np.isfinite(a.get_params()))
    assert a == b
    assert [r.episodes for r in ra.records] == [8, 16]
    assert ra.metrics_csv(timing=False) == rb.metrics_csv(timing=False)


# -- optimizers and config --------------------------------------------------------


def test_adam_first_step_is_lr_times_sign():
    theta = Adam(0.1).step(np.zeros(3), np.array([2.0, -0.5, 0.0]))
    np.testing.assert_allclose(theta, [0.1, -0.1, 0.0], atol=1e-7)


@pytest.mark.parametrize(
    "bad",
    [
        {"learning_rate": 0},
        {"es_population": 5},
        {"ppo_clip": 1.5},
        {"cap_factor": "1"},
        {"cap_factor": "x"},
        {"algo": "dqn"},
        {"optimizer": "rmsprop"},
    ],
)
def test_config_rejects_bad_values(bad):
    with pytest.raises(ParameterError):
        TrainerConfig(**bad).check()


def test_config_from_dict_rejects_unknown_key():
    with pytest.raises(ParameterError):
        TrainerConfig.from_dict({"learning_rat": 0.1})


# -- evaluation -------------------------------------------------------------------


def test_evaluate_heuristic_against_itself_is_zero(m1):
    assert evaluate_policy([m1], heuristic_policy(DEFAULT_HEURISTIC)).reduction_pct == 0.0
    assert evaluate_policy([m1]).reduction_pct == 0.0


def test_evaluate_never_inline_on_m1(m1):
    report = evaluate_policy([m1], lambda f: 0)
    assert report.reduction_pct == pytest.approx(100 * (17 - 19) / 17)
    assert report.reduction_pct == pytest.approx(-11.76, abs=0.005)
    assert report.losses == 1


def test_evaluate_oracle_sequence_on_m1(m1):
    report = evaluate_policy([m1], replay_policy([0, 1, 0, 0]))
    assert report.reduction_pct == pytest.approx(100 / 17)
    assert report.wins == 1
