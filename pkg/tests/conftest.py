_verdicts: list[tuple[int, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _verdicts.extend(v for k, v in report.user_properties if k == "acceptance")


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance")
        for _, line in sorted(_verdicts, key=lambda v: v[0]):
            terminalreporter.write_line(line)
