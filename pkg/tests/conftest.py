import functools

import pytest

from weakhilbert.measure import ConstructionParams, construct

ACCEPTANCE_LINES = {}


@functools.lru_cache(maxsize=None)
def built(k, depth=2, base_support="recursive"):
    return construct(ConstructionParams(k, depth, base_support=base_support))


@pytest.fixture(scope="session")
def build():
    return built


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
