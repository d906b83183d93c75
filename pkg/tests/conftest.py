import numpy as np
import pytest

from g2csim.reference import build_reference_models


@pytest.fixture(scope="session")
def reference_models():
    return build_reference_models()


@pytest.fixture(scope="session")
def detector(reference_models):
    return reference_models[0]


@pytest.fixture(scope="session")
def coarse(reference_models):
    return reference_models[1]


@pytest.fixture(scope="session")
def precise(reference_models):
    return reference_models[2]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
