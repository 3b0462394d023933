import pytest

from regraph.numerics import clear_tape

# filled by test_acceptance; echoed at the end of the terminal report
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def fresh_tape():
    clear_tape()
    yield
    clear_tape()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
