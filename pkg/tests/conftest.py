import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chive.corpus import CorpusConfig, generate
from chive.structure import PhoneNode, ProsodicTargets, SyllableNode, UtteranceTree, WordNode, feature_dims

settings.register_profile("ci", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("ci")


def make_tree(shape, dims=(3, 2, 1, 4), durations=None, uid="t"):
    """Tree from a nested list of phone counts: ``[[2, 1], [3]]`` is two words,
    the first with syllables of 2 and 1 phones."""
    sd, wd, yd, pd = dims
    k = 0
    words = []
    for wi, syls in enumerate(shape):
        ss = []
        for si, n in enumerate(syls):
            phones = []
            for pi in range(n):
                d = None if durations is None else int(durations[k])
                phones.append(PhoneNode(np.eye(pd)[(k + pi) % pd], d))
                k += 1
            ss.append(SyllableNode(np.full(yd, float(si % 2)), phones))
        words.append(WordNode(np.linspace(0, 1, wd) * (wi + 1), ss))
    return UtteranceTree(np.arange(sd, dtype=float) / sd, words, uid)


def make_targets(durations, seed=0):
    d = np.asarray(durations, dtype=np.int64)
    rng = np.random.default_rng(seed)
    T = int(d.sum())
    return ProsodicTargets(5.0 + 0.1 * rng.standard_normal(T), 0.5 + 0.1 * rng.standard_normal(T), d)


@pytest.fixture(scope="session")
def small_corpus():
    return generate(CorpusConfig(utterances=24, seed=5), 5)


@pytest.fixture(scope="session")
def dims(small_corpus):
    return feature_dims([small_corpus[0].tree])


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
