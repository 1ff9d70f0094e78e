import sys
from pathlib import Path

import numpy as np
import pytest

from adaptire.fitting.synthetic import REFERENCE, calibrated_tree
from adaptire.mf_core import BaseMfCoefficients
from adaptire.vehicle import VehicleParameters

DATA_DIR = Path(__file__).resolve().parents[1] / "data"


@pytest.fixture(scope="session")
def tree():
    return calibrated_tree()


@pytest.fixture(scope="session")
def reference():
    return REFERENCE


@pytest.fixture
def base():
    return BaseMfCoefficients(a1=-2.5e-5, a2=1.2, a3=60000.0, a4=4000.0)


@pytest.fixture(scope="session")
def vehicle():
    return VehicleParameters()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
