import pytest

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE_RESULTS = {}


@pytest.fixture
def record():
    def _record(number, passed, detail=""):
        ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
        return bool(passed)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
