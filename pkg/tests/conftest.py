import pytest

from robust_elasticity.acceptance import Context

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_ctx():
    return Context(threads=1)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
