"""Shared pytest configuration: per-criterion summary for the acceptance suite."""

import pytest

_ACCEPTANCE_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and "test_acceptance" in str(item.fspath):
        _ACCEPTANCE_RESULTS[item.name] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        status = _ACCEPTANCE_RESULTS[name]
        mark = "PASS" if status == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark}  {name}")
