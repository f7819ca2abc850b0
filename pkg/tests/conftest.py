import pytest

from simultaneity.experiments import build_named

_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion for the end-of-run report."""

    def record(number: int, description: str, passed: bool, detail: str = ""):
        _CRITERIA[(number, description)] = (passed, detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, description), (passed, detail) in sorted(_CRITERIA.items()):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {description}: {detail}")


@pytest.fixture(scope="session")
def fig3a():
    return build_named("fig3a")


@pytest.fixture(scope="session")
def fig5a():
    return build_named("fig5a")
