import numpy as np
import pytest

from spinsqueeze import Couplings, ExperimentConfig

_criteria = {}


@pytest.fixture
def couplings():
    return Couplings()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_config():
    return ExperimentConfig(trials=600, seed=7)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "seen": False})
    if report.when == "call":
        entry["seen"] = True
    if report.failed or (report.when == "call" and report.skipped):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ok"] and entry["seen"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {entry['title']}")
