import pytest
from hypothesis import settings

from rowtrack import Geometry, GeometryConfig, TrackerConfig

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []

SMALL = GeometryConfig(row_count=4096, llc_sets=16, bank_count=4, window_ns=1_000_000)


def geometry(variant="start_d", config=SMALL, **tracker):
    return Geometry(config, TrackerConfig(variant=variant, **tracker))


@pytest.fixture
def small_geo():
    return geometry


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
