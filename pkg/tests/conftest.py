"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        details = "; ".join(v for k, v in report.user_properties if k == "detail")
        _results[marker] = (outcome, report.duration, details)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("criterion")
    if m is not None:
        outcome.get_result().criterion = m.args


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), (outcome, duration, details) in sorted(_results.items()):
        terminalreporter.write_line(f"criterion {number}: {outcome}  {title}  ({duration:.1f}s)")
        if details:
            terminalreporter.write_line(f"    {details}")
