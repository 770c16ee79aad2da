import numpy as np
import pytest

from wevade.harness.corpus import TEST_STREAM, SyntheticCorpus


@pytest.fixture(scope="session")
def test_images():
    return list(SyntheticCorpus(20, seed=0, stream=TEST_STREAM))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run so it survives capture
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
