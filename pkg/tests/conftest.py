import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from hamlearn import HamiltonianSpec, enumerate_k_body
from hamlearn._backend import available_backends

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

BACKENDS = available_backends()


@pytest.fixture(params=sorted(BACKENDS))
def kernels(request):
    """Each importable kernel backend in turn."""
    return BACKENDS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spec(n, k, rng, basis=None):
    basis = enumerate_k_body(n, k) if basis is None else basis
    return HamiltonianSpec(basis, rng.normal(size=basis.m))


def random_pure(n, rng):
    psi = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def pytest_terminal_summary(terminalreporter):
    from _report import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
