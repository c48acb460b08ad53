from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from gaplab.geometry import ChainConfig, assemble_chain, sphere_profile

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

# lines collected by the acceptance suite, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def chain_eps02():
    return assemble_chain(ChainConfig(blocks=1, eps=0.2, h=0.01, periodic=True))


@pytest.fixture(scope="session")
def chain_eps01():
    return assemble_chain(ChainConfig(blocks=1, eps=0.1, h=0.005, periodic=True))


@pytest.fixture(scope="session")
def chain_eps005():
    return assemble_chain(ChainConfig(blocks=1, eps=0.05, h=0.005, periodic=True))


@pytest.fixture(scope="session")
def sphere_coarse():
    return sphere_profile(0.01)
