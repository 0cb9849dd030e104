import numpy as np
import pytest

from tips import rng as rngmod
from tips.core import BirthDeathModel, abs_distance, indicator_distance, two_state_model
from tips.experiments import rna_instance
from tips.proposal import Potential


@pytest.fixture
def gen():
    return rngmod.stream(12345, 99)


@pytest.fixture(scope="session")
def flip():
    return two_state_model(1.0, 1.0)


@pytest.fixture
def indicator():
    return Potential(indicator_distance)


@pytest.fixture
def walk():
    """Symmetric walk on 0, 1, 2, ... (reflecting at 0)."""
    return BirthDeathModel(1.0, 1.0)


@pytest.fixture
def distance():
    return Potential(abs_distance)


@pytest.fixture(scope="session")
def rna12():
    return rna_instance()


def two_state_exact(t=1.0):
    return 0.5 * (1 - np.exp(-2 * t))


# acceptance criteria report: number -> (passed, detail)
ACCEPTANCE: dict = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
