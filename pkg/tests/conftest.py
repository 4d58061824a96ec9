"""Shared test fixtures: the acceptance-criteria reporter.

Each acceptance test emits exactly one [ACCEPTANCE n] PASS/FAIL line.  The
lines are printed as they happen (visible with -s or on failure) and repeated
in a terminal summary section so a plain ``pytest -v`` run always shows them.
"""

from __future__ import annotations

import pytest

_lines: list[str] = []


@pytest.fixture
def acceptance_report():
    def _report(num: int, passed: bool, detail: str) -> str:
        line = f"[ACCEPTANCE {num}] {'PASS' if passed else 'FAIL'} {detail}"
        print(line)
        _lines.append(line)
        return line

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _lines:
        terminalreporter.section("acceptance criteria")
        for line in _lines:
            terminalreporter.write_line(line)
