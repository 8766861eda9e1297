import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sizeinline import irmodel
from sizeinline.corpusgen import CorpusParams, gen_corpus, gen_module
from sizeinline.errors import InvalidCallSiteError, ParameterError
from sizeinline.features import (
    FEATURE_NAMES,
    STD_FLOOR,
    FeatureVector,
    compute_heights,
    corpus_stats,
    extract_features,
)
from sizeinline.irmodel import INTERNAL, CallSite, FunctionDef, ModuleGraph


def test_feature_order_is_canonical():
    assert FEATURE_NAMES == (
        "caller_basic_block_count",
        "caller_conditionally_executed_blocks",
        "caller_users",
        "callee_basic_block_count",
        "callee_conditionally_executed_blocks",
        "callee_users",
        "callsite_height",
        "cost_estimate",
        "number_constant_params",
        "edge_count",
        "node_count",
    )


def test_heights_m1(m1):
    assert compute_heights(m1) == {"f_leaf": 0, "f_helper": 1, "f_main": 2}


def test_heights_single_function_and_recursive_pair():
    assert compute_heights(ModuleGraph([FunctionDef("only", INTERNAL, 3)])) == {"only": 0}
    pair = ModuleGraph(
        [
            FunctionDef("a", INTERNAL, 3, 1, 0, [], [CallSite("ab", "a", "b")]),
            FunctionDef("b", INTERNAL, 3, 1, 0, [], [CallSite("ba", "b", "a")]),
        ]
    )
    assert compute_heights(pair) == {"a": 0, "b": 0}


def test_heights_take_longest_path():
    # a -> b -> c and a -> c: a sits two levels above c
    m = ModuleGraph(
        [
            FunctionDef("a", INTERNAL, 5, 1, 0, [], [CallSite("1", "a", "c"), CallSite("2", "a", "b")]),
            FunctionDef("b", INTERNAL, 3, 1, 0, [], [CallSite("3", "b", "c")]),
            FunctionDef("c", INTERNAL, 3),
        ]
    )
    assert compute_heights(m) == {"a": 2, "b": 1, "c": 0}


def test_extract_features_m1(m1):
    h = compute_heights(m1)
    assert extract_features(m1, m1.site("c1"), h) == (3, 1, 0, 2, 1, 1, 1, 3, 1, 3, 3)
    assert extract_features(m1, m1.site("c2"), h) == (3, 1, 0, 1, 0, 2, 0, 2, 0, 3, 3)


def test_extract_features_dead_site(m1):
    h = compute_heights(m1)
    c3 = m1.site("c3")
    m1.inline(c3)
    with pytest.raises(InvalidCallSiteError):
        extract_features(m1, c3, h)


def test_no_const_params_when_mask_empty(small_corpus):
    for m in small_corpus:
        h = compute_heights(m)
        for c in m.call_sites():
            if not any(c.const_args):
                assert extract_features(m, c, h).number_constant_params == 0


def test_zero_const_probability_gives_zero_const_params():
    for m in gen_corpus(CorpusParams(seed=3, module_count=10, const_arg_probability=0.0)):
        h = compute_heights(m)
        assert all(extract_features(m, c, h).number_constant_params == 0 for c in m.call_sites())


def test_corpus_stats_examples():
    row = FeatureVector(*range(11))
    s = corpus_stats([row, row, row])
    assert s.std == (STD_FLOOR,) * 11
    assert s.mean == tuple(float(v) for v in range(11))

    other = list(row)
    other[4] += 2
    s2 = corpus_stats([row, FeatureVector(*other)])
    assert s2.mean[4] == row[4] + 1
    assert s2.std[4] == 1.0


def test_corpus_stats_order_invariant():
    rnd = random.Random(1)
    rows = [FeatureVector(*(rnd.randint(0, 500) for _ in range(11))) for _ in range(300)]
    shuffled = rows[:]
    rnd.shuffle(shuffled)
    assert corpus_stats(rows) == corpus_stats(shuffled)


def test_corpus_stats_empty():
    with pytest.raises(ParameterError):
        corpus_stats([])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), rnd=st.randoms(use_true_random=False))
def test_incremental_features_match_recomputation(seed, rnd):
    m = gen_module(CorpusParams(seed=seed, functions_per_module=(3, 15)), 0)
    heights = compute_heights(m)
    for _ in range(rnd.randint(0, 12)):
        offered = [c for c in m.call_sites() if not m.same_scc(c.caller, c.callee)]
        if not offered:
            break
        c = rnd.choice(offered)
        callee = m.functions[c.callee]
        deleted_sites = len(callee.call_sites)
        edges, nodes = m.edge_count, m.node_count
        out = m.inline(c)
        expected_drop = 1 - len(out.cloned_call_sites) + (deleted_sites if out.callee_deleted else 0)
        assert edges - m.edge_count == expected_drop
        assert nodes - m.node_count == (1 if out.callee_deleted else 0)
    # reparsing recomputes user and edge counts from scratch
    fresh = irmodel.loads(irmodel.dumps(m))
    for c in m.call_sites():
        assert extract_features(m, c, heights) == extract_features(fresh, fresh.site(c.id), heights)
