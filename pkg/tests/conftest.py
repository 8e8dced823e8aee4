import pytest

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def record_acceptance():
    def record(result):
        ACCEPTANCE_RESULTS[result.number] = result

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n].line())
