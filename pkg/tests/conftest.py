import pytest

from coupled_superposition.mse import MseFunction


@pytest.fixture(scope="session")
def f1():
    return MseFunction(1)


@pytest.fixture(scope="session")
def f2():
    return MseFunction(2)


@pytest.fixture(scope="session")
def f3():
    return MseFunction(3)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record a check result; the lines are printed in the terminal summary."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(label, result):
        lines.append(f"{label}: {result.line()}")
        return result
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
