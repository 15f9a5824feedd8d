import pytest

from branchmpc.config import bundled


@pytest.fixture(scope="session")
def traffic_light():
    return bundled("traffic_light")


@pytest.fixture(scope="session")
def merging():
    return bundled("merging")


@pytest.fixture(scope="session")
def junction():
    return bundled("junction")


@pytest.fixture(scope="session")
def intersection():
    return bundled("intersection")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
