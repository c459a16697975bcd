import pytest

from rhabac import Engine, EngineConfig, build_micro_cloud


@pytest.fixture(params=["direct", "materialized"])
def strategy(request):
    return request.param


@pytest.fixture
def micro(strategy):
    """The micro-cloud fixture with subjects s:u:u1 and s:u:u2."""
    return build_micro_cloud(Engine(EngineConfig(strategy=strategy)))


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_log(request):
    """Where acceptance criteria record their PASS/FAIL line."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
