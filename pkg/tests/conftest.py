"""Shared pytest plumbing for the acceptance suite.

Acceptance tests print one verdict line each; stdout capture would hide
those for passing tests, so the lines are also collected here and echoed
in the terminal summary.
"""

import pytest

_verdicts: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record and print one '[tag] STATUS: detail' line per criterion."""

    def _record(tag: str, status: str, detail: str) -> str:
        line = f"[{tag}] {status}: {detail}"
        print(line)
        _verdicts.append(line)
        return line

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in _verdicts:
            terminalreporter.write_line(line)
