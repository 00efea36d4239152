"""Collects the acceptance PASS/FAIL lines and echoes them in the terminal
summary, so they are visible in plain `pytest -v` output."""

acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_lines):
            terminalreporter.write_line(line)
