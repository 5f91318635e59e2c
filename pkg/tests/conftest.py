"""Shared pytest wiring.

The acceptance tests append one line per criterion to ACCEPTANCE_LINES;
the terminal-summary hook prints them all at the end of the run so the
per-criterion verdicts are visible regardless of output capturing.
"""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
