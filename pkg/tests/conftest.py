def pytest_terminal_summary(terminalreporter):
    from test_acceptance import REPORTS

    if not REPORTS:
        return
    terminalreporter.section("acceptance criteria")
    for report in REPORTS:
        for line in report.splitlines():
            terminalreporter.write_line(line)
