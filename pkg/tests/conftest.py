"""Collects one pass/fail line per acceptance criterion and prints them at the end of the run."""
import re

import pytest

CRITERIA = {}
DETAILS = {}


@pytest.fixture
def criterion(request):
    """record(detail) stores the measured numbers shown next to the criterion's verdict."""
    m = re.search(r"test_criterion_(\d+)", request.node.name)
    number = int(m.group(1)) if m else None

    def record(detail):
        DETAILS[number] = detail
        print(f"criterion {number}: {detail}")

    return record


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or report.failed:
        CRITERIA[n] = CRITERIA.get(n, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        verdict = "PASS" if CRITERIA[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {DETAILS.get(n, '')}")
