import pytest

from sizeinline.corpusgen import CorpusParams, gen_corpus
from sizeinline.irmodel import reference_module


@pytest.fixture
def m1():
    return reference_module()


@pytest.fixture(scope="session")
def small_corpus():
    return gen_corpus(CorpusParams(seed=11, module_count=12))


@pytest.fixture(scope="session")
def tiny_params():
    """Modules small enough for exhaustive search."""
    return CorpusParams(seed=5, module_count=60, functions_per_module=(3, 6), calls_per_function=(0, 2))


# acceptance verdicts, printed as one line per criterion at the end of the run
VERDICTS: dict[int, str] = {}


def record_verdict(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
