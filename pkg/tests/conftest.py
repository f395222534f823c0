import pytest

from capcot.backend import Endpoint, ScriptedBackend


def scripted(script) -> Endpoint:
    """Endpoint over a scripted backend that never sleeps between retries."""
    return Endpoint(ScriptedBackend(script), sleep=lambda _s: None)


@pytest.fixture
def make_endpoint():
    return scripted


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
