import pytest

_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_KEY] = []


@pytest.fixture
def criterion_log(request):
    """Append ``(number, passed, text)`` to have it printed in the terminal summary."""
    return request.config.stash[_KEY]


def pytest_terminal_summary(terminalreporter, config):
    lines = sorted(config.stash.get(_KEY, []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for number, passed, text in lines:
            terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {text}")
