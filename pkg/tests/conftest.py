"""Collects the acceptance-suite verdict lines and prints them after the run."""
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    def report(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
