import numpy as np
import pytest

from fixpp.domain import Window

_CRITERIA = {}


@pytest.fixture
def unit():
    return Window.unit()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    marker = dict(report.user_properties).get("criterion")
    if marker is None:
        return
    if report.when == "call" or report.outcome != "passed":
        prev = _CRITERIA.get(marker)
        ok = report.outcome == "passed"
        _CRITERIA[marker] = ok if prev is None else (prev and ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        status = "PASS" if _CRITERIA[key] else "FAIL"
        terminalreporter.write_line(f"criterion {key:>2}: {status}")
