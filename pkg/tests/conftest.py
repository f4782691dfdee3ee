import numpy as np
import pytest

from holegl.elliptic import solve_xi0
from holegl.geometry import build_grid, disk_domain

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "tests": []})
    if rep.when == "call" or rep.outcome != "passed":
        if rep.outcome != "passed":
            entry["passed"] = False
        if rep.when == "call" or rep.outcome == "failed":
            entry["tests"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {entry['title']}")


@pytest.fixture(scope="session")
def central_domain():
    return disk_domain([(0.0, 0.0)], delta=0.05)


@pytest.fixture(scope="session")
def central_grid(central_domain):
    return build_grid(central_domain, 0.0125)


@pytest.fixture(scope="session")
def central_xi0(central_domain, central_grid):
    return solve_xi0(central_domain, central_grid)


@pytest.fixture(scope="session")
def coarse_domain():
    """Single central hole on a coarse grid for quick solver tests."""
    return disk_domain([(0.0, 0.0)], delta=0.2)


@pytest.fixture(scope="session")
def coarse_grid(coarse_domain):
    return build_grid(coarse_domain, 0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
