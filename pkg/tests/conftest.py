"""Shared test configuration: acceptance verdict reporting.

pytest captures stdout of passing tests, so the acceptance tests register
their one-line verdicts here and a terminal-summary hook prints them after
the normal test output, where they stay visible.
"""
import re

_collected: set[int] = set()
_results: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    _results[number] = (passed, detail)


def pytest_runtest_setup(item):
    m = re.match(r"test_criterion_(\d+)", item.name)
    if m and item.parent.name == "test_acceptance.py":
        _collected.add(int(m.group(1)))


def pytest_terminal_summary(terminalreporter):
    if not _collected:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_collected):
        if num in _results:
            passed, detail = _results[num]
            verdict = "PASS" if passed else "FAIL"
        else:
            verdict, detail = "FAIL", "test did not complete"
        terminalreporter.write_line(f"ACCEPTANCE {num}: {verdict} - {detail}")
