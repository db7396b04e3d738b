"""Shared pytest wiring: acceptance-criterion summary lines.

The acceptance tests report through the `criterion` fixture so every run
ends with one PASS/FAIL line per criterion in the terminal summary, with
the measured values and pinned tolerances inline.
"""

import pytest

_CRITERION_LINES = {}


@pytest.fixture
def criterion():
    """Record one acceptance-criterion outcome and assert it."""

    def record(number, passed, detail):
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        _CRITERION_LINES[number] = line
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERION_LINES):
            terminalreporter.write_line(_CRITERION_LINES[number])
