import pytest

CRITERIA_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def criteria_lines():
    return CRITERIA_LINES


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(CRITERIA_LINES):
        terminalreporter.write_line(CRITERIA_LINES[cid])
