from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sizeinline.corpusgen import CorpusParams, gen_module
from sizeinline.environment import (
    EpisodeResult,
    StepRecord,
    episode_to_line,
    loads_log,
    read_log,
    run_episode,
    traversal_order,
    write_log,
)
from sizeinline.errors import FormatError
from sizeinline.features import FeatureVector
from sizeinline.heuristic import heuristic_policy
from sizeinline.irmodel import EXTERNAL, INTERNAL, CallSite, FunctionDef, ModuleGraph
from sizeinline.policy import MlpPolicy


def test_traversal_m1_without_inlining(m1):
    assert [c.id for c in traversal_order(m1)] == ["c3", "c1", "c2"]


def test_traversal_visits_clones_next(m1):
    seen = []
    for c in traversal_order(m1):
        seen.append(c.id)
        if c.id == "c1":
            m1.inline(c)
    assert seen[:2] == ["c3", "c1"]
    assert seen[2].startswith("c3@")
    assert seen[3:] == ["c2"]


def test_traversal_empty_cases():
    assert list(traversal_order(ModuleGraph([FunctionDef("a", EXTERNAL, 4)]))) == []
    pair = ModuleGraph(
        [
            FunctionDef("a", INTERNAL, 3, 1, 0, [], [CallSite("ab", "a", "b")]),
            FunctionDef("b", INTERNAL, 3, 1, 0, [], [CallSite("ba", "b", "a")]),
        ]
    )
    assert list(traversal_order(pair)) == []


def test_m1_heuristic_episode(m1):
    ep = run_episode(m1, heuristic_policy())
    assert [s.action for s in ep.steps] == [1, 1, 1]
    assert [s.reward for s in ep.steps] == [-2, 3, 1]
    assert (ep.final_size, ep.total_reward) == (17, 2)
    assert m1.size == 19  # the episode ran on a private copy


def test_m1_never_and_always(m1):
    never = run_episode(m1, lambda f: 0)
    assert (never.final_size, never.total_reward, len(never.steps)) == (19, 0, 3)
    assert all(s.action == 0 for s in never.steps)
    always = run_episode(m1, lambda f: 1)
    assert (always.final_size, always.total_reward) == (17, 2)


def _largest_inlined_callee(ep):
    # callee size at inline time, after const-arg savings: cost_estimate + 1
    return max((s.features.cost_estimate + 1 for s in ep.steps if s.action == 1), default=0)


def _chain(n, size=30):
    """root -> f1 -> ... each function external so nothing is ever deleted."""
    funcs = []
    for i in range(n):
        sites = [CallSite(f"s{i}", f"f{i}", f"f{i + 1}")] if i + 1 < n else []
        funcs.append(FunctionDef(f"f{i}", EXTERNAL, size, 1, 0, [], sites))
    return ModuleGraph(funcs)


def test_growth_cap_forces_no_inline():
    m = _chain(8)
    ep = run_episode(m, lambda f: 1, cap_factor="6/5")
    forced = [s for s in ep.steps if s.forced]
    assert forced, "cap should have engaged"
    assert all(s.action == 0 and s.reward == 0 for s in forced)
    first = next(i for i, s in enumerate(ep.steps) if s.forced)
    assert all(s.forced for s in ep.steps[first:])
    assert ep.final_size <= Fraction(6, 5) * ep.initial_size + _largest_inlined_callee(ep)
    assert ep.violations() == []


def test_sample_mode_is_seeded(small_corpus):
    policy = MlpPolicy.initialize(seed=3)
    m = small_corpus[0]
    a = run_episode(m, policy, "sample", seed=42)
    b = run_episode(m, policy, "sample", seed=42)
    assert a == b
    c = run_episode(m, policy, "sample", seed=43)
    assert [s.action for s in a.steps] != [s.action for s in c.steps]


def test_sample_mode_needs_rng(small_corpus):
    with pytest.raises(ValueError):
        run_episode(small_corpus[0], MlpPolicy.initialize(), "sample")


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32),
    p_inline=st.floats(0, 1),
    cap=st.sampled_from(["11/10", "3/2", "3"]),
    rseed=st.integers(0, 1000),
)
def test_conservation_any_policy(seed, p_inline, cap, rseed):
    m = gen_module(CorpusParams(seed=seed), 0)
    rng = np.random.default_rng(rseed)
    ep = run_episode(m, lambda f: int(rng.random() < p_inline), cap_factor=cap)
    assert ep.violations() == []
    assert ep.total_reward == ep.initial_size - ep.final_size == sum(s.reward for s in ep.steps)
    assert ep.final_size <= Fraction(cap) * ep.initial_size + _largest_inlined_callee(ep)


def test_log_round_trip(tmp_path, small_corpus):
    eps = [run_episode(m, heuristic_policy()) for m in small_corpus[:4]]
    path = tmp_path / "log.jsonl"
    write_log(eps, path)
    assert read_log(path) == eps
    assert (tmp_path / "log.jsonl.stats.json").exists()


def test_log_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert read_log(path) == []


def test_log_rejects_bad_total(m1):
    ep = run_episode(m1, heuristic_policy())
    line = episode_to_line(ep).replace('"total_reward":2', '"total_reward":5')
    with pytest.raises(FormatError) as info:
        loads_log(episode_to_line(ep) + "\n" + line + "\n")
    assert info.value.line == 2


@pytest.mark.parametrize("bad", ["{not json", "[]", '{"module_id":"m"}'])
def test_log_rejects_malformed(bad):
    with pytest.raises(FormatError) as info:
        loads_log(bad + "\n")
    assert info.value.line == 1


def test_step_record_forced_must_be_noop():
    f = FeatureVector(*[0] * 11)
    ep = EpisodeResult("m", 10, 10, 0, [StepRecord(f, 1, 0, True)])
    assert ep.violations()
