"""Shared pytest plumbing: a session-wide log for acceptance criterion lines."""

import pytest

_criterion_lines = []


@pytest.fixture(scope="session")
def criterion_log():
    """Append one formatted pass/fail line per acceptance criterion."""
    return _criterion_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)
