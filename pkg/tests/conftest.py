acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance scoreboard")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
