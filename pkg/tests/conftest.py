import numpy as np
import pytest

from fredholm_lab.lattice import LatticeGeometry
from fredholm_lab.models import ModelSpec, build_bulk

ACCEPTANCE: dict = {}


def record_criterion(number: int, passed: bool, detail: str):
    """Store one acceptance outcome; printed in the terminal summary."""
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def qwz_torus8():
    g = LatticeGeometry.square(8, 2, periodic=True)
    return build_bulk(ModelSpec("qwz", -1.0), None, g)


@pytest.fixture(scope="session")
def qwz_torus12():
    g = LatticeGeometry.square(12, 2, periodic=True)
    return build_bulk(ModelSpec("qwz", -1.0), None, g)
