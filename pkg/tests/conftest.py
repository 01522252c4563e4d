import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the terminal summary, then assert it."""

    def record(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  [{number:>2}] {title}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
