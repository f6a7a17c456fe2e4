import pytest

_LINES = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number: int, name: str, passed: bool, detail: str = ""):
        _LINES[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {name}: {detail}".rstrip()
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_LINES):
        terminalreporter.write_line(_LINES[k])
