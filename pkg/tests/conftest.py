"""Shared pytest hooks.

Tests marked ``@pytest.mark.acceptance(num, label)`` get a one-line
PASS/FAIL verdict in the terminal summary so the end-to-end battery can
be read at a glance.
"""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(num, label): end-to-end acceptance check, reported in the summary",
    )


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        num, label = marker.args
        if report.failed:
            _RESULTS[num] = ("FAIL", label)
        elif report.skipped:
            _RESULTS.setdefault(num, ("SKIP", label))
        elif report.when == "call":
            _RESULTS[num] = ("PASS", label)
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        outcome, label = _RESULTS[num]
        terminalreporter.write_line(f"ACCEPTANCE {num} {outcome} - {label}")
