import numpy as np
import pytest

from nilsphere.group_core import build_group
from nilsphere.kernels import SurfaceData


@pytest.fixture(scope="session")
def h1():
    return build_group("heisenberg")


@pytest.fixture(scope="session")
def appendix_group():
    return build_group("appendix")


@pytest.fixture(scope="session")
def flat_surface():
    return SurfaceData(2, 1, height=0.0)


@pytest.fixture(scope="session")
def surface():
    return SurfaceData(2, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Record and print one acceptance line; returns the pass flag for asserting."""

    def _record(number, name, passed, detail, elapsed, limit):
        timed = elapsed <= limit
        ok = bool(passed and timed)
        line = (f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {name}: {detail}; "
                f"{elapsed:.2f}s (limit {limit:g}s)")
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
