import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: criterion(id, passed, detail); fails the test if not passed."""
    lines = request.config.stash[_LINES]

    def report(cid: str, passed: bool, detail: str) -> None:
        line = f"{cid} {'PASS' if passed else 'FAIL'}: {detail}"
        lines.append(line)
        print(line)
        assert passed, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
