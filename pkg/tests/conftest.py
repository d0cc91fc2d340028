"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line per criterion."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "tests": 0})
    if report.when == "call":
        entry["tests"] += 1
    if report.failed:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        status = "PASS" if entry["passed"] and entry["tests"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {entry['title']} ({entry['tests']} tests)")
