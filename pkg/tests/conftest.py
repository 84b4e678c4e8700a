import pytest
from hypothesis import HealthCheck, settings

from pondsl.model import NetworkConfig, reference_network

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def net() -> NetworkConfig:
    return reference_network()


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true", help="skip long simulation checks")


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--skip-slow"):
        return
    skip = pytest.mark.skip(reason="--skip-slow given")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


VERDICTS: list = []


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
