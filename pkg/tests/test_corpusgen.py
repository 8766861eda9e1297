import numpy as np
import pytest

from sizeinline import irmodel
from sizeinline.corpusgen import CorpusParams, gen_corpus, gen_module, read_corpus, write_corpus
from sizeinline.environment import run_episode
from sizeinline.errors import ParameterError
from sizeinline.heuristic import heuristic_policy


def test_same_seed_same_bytes():
    p = CorpusParams(seed=7, module_count=15)
    a = [irmodel.dumps(m) for m in gen_corpus(p)]
    b = [irmodel.dumps(m) for m in gen_corpus(p)]
    assert a == b


def test_module_independent_of_corpus_length():
    short = gen_corpus(CorpusParams(seed=9, module_count=3))
    long = gen_corpus(CorpusParams(seed=9, module_count=30))
    assert short == long[:3]


def test_different_seeds_differ():
    assert gen_module(CorpusParams(seed=1), 0) != gen_module(CorpusParams(seed=2), 0)


def test_every_module_valid_with_a_call_site():
    for m in gen_corpus(CorpusParams(seed=4, module_count=100)):
        assert m.validate() == []
        assert m.edge_count >= 1


def test_no_back_edges_means_dag():
    for m in gen_corpus(CorpusParams(seed=8, module_count=40, back_edge_probability=0.0)):
        assert all(len(comp) == 1 for comp in m.sccs)
        assert not any(c.caller == c.callee for c in m.call_sites())


def test_back_edges_create_sccs():
    corpus = gen_corpus(CorpusParams(seed=8, module_count=40, back_edge_probability=0.5))
    assert any(len(comp) > 1 or any(c.caller == c.callee for c in m.call_sites()) for m in corpus for comp in m.sccs)


def test_decision_density_under_heuristic():
    corpus = gen_corpus(CorpusParams(seed=0, module_count=100))
    decide = heuristic_policy()
    rich = [len(run_episode(m, decide).decisions) >= 5 for m in corpus]
    assert np.mean(rich) >= 0.8


@pytest.mark.parametrize(
    "bad",
    [
        dict(size=(1, 10)),
        dict(size=(10, 5)),
        dict(functions_per_module=(1, 1)),
        dict(const_arg_probability=1.5),
        dict(back_edge_probability=-0.1),
        dict(savings_fraction=(0.2, 1.5)),
        dict(calls_per_function=(0, 0)),
        dict(growth_cap_factor="1"),
    ],
)
def test_infeasible_params_rejected(bad):
    with pytest.raises(ParameterError):
        gen_corpus(CorpusParams(module_count=1, **bad))


def test_write_and_read_corpus(tmp_path):
    p = CorpusParams(seed=3, module_count=4)
    corpus = gen_corpus(p)
    write_corpus(corpus, tmp_path / "c", p)
    assert read_corpus(tmp_path / "c") == corpus
    assert (tmp_path / "c" / "manifest.json").exists()
