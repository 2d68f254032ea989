"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

import pytest

CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    num, title = marker.args
    if report.when == "setup" and not report.skipped:
        return
    status = "SKIP" if report.skipped else "PASS" if report.passed else "FAIL"
    prev = CRITERIA.get(num, ("PASS", title))[0]
    # any failing part of a criterion fails it
    if prev == "FAIL" or (prev == "SKIP" and status == "PASS"):
        status = prev
    CRITERIA[num] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        status, title = CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {title}")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion implemented by the test")
