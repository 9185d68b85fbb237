import warnings

import numpy as np
import pytest

from fomas import io


@pytest.fixture(scope="session")
def example_file():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", io.InadmissibleDeltaWarning)
        return io.read_problem_file(io.bundled_example_path())


@pytest.fixture(scope="session")
def example(example_file):
    return example_file.problem


@pytest.fixture(scope="session")
def refs(example_file):
    return example_file.references


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda ln: int(ln.split()[2])):
            terminalreporter.write_line(line)
