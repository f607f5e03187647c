import itertools

import numpy as np
import pytest

from bayesvit import kernels

# one line per acceptance criterion, echoed after the run
VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the test once per available kernel backend."""
    with kernels.using_backend(request.param):
        yield request.param


def all_paths(K, n):
    return np.array(list(itertools.product(range(K), repeat=n)), dtype=np.int64)


def random_pseudo(K, n, seed, normalized=False):
    from bayesvit.hmm import PseudoHmm
    g = np.random.default_rng(seed)
    if normalized:
        li = np.log(g.dirichlet(np.ones(K)))
        lt = np.log(g.dirichlet(np.ones(K), size=K))
    else:
        li = g.normal(size=K)
        lt = g.normal(size=(K, K))
    return PseudoHmm(li, lt, g.normal(size=(n, K)))
