import numpy as np
import pytest

import entangler as E
from entangler import tensor as T
from entangler.tensor import _backend

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def f64():
    with T.precision(np.float64):
        yield


@pytest.fixture(params=["python", "compiled"])
def backend(request):
    previous = _backend.BACKEND
    try:
        _backend.use(request.param)
    except ImportError:
        pytest.skip("compiled kernels not built")
    yield request.param
    _backend.use(previous)


@pytest.fixture
def toy_vocabs():
    corpus = ["a dog sat on the mat", "the dog ran", "a cat sat", "dogs sat"]
    return E.build_vocabs(corpus, 10)


def tiny_model(sv, cv, seed=0, **overrides):
    kw = dict(hidden_size=16, num_layers=1, num_heads=2, feed_forward_size=32, num_coattention=1, dropout=0.0)
    kw.update(overrides)
    cfg = E.ModelConfig(len(sv), len(cv), **kw)
    return E.EntanglementModel(cfg, np.random.default_rng(seed))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: (int(str(k).split()[0]), str(k))):
        ok, text = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {text}")
