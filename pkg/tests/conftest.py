import numpy as np
import pytest

from flipid import DisorderMeasure, chain, explicit


@pytest.fixture
def single_spin():
    return explicit(1, [[0, 0.3, 1.0]], subregion=[0])


@pytest.fixture
def chain3():
    return chain(3, 0.3, 1.0, subregion=[0, 1])


@pytest.fixture
def field_chain():
    """Two spins with site fields; only the field on site 0 is interior."""
    return chain(2, 0.3, 1.0, field_mu=0.2, field_delta=0.7, subregion=[0])


@pytest.fixture
def gh32():
    return DisorderMeasure.gauss_hermite(32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
