import pytest

# (criterion number, passed, detail) appended by tests/test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    def record(number, passed, detail):
        line = f"[acceptance {number:>2}] {'PASS' if passed else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
