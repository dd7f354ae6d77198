import pytest

_lines = []


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_logreport(report):
    if report.when == "call":
        _lines.extend(v for k, v in report.user_properties if k == "acceptance")


def pytest_terminal_summary(terminalreporter):
    if _lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
