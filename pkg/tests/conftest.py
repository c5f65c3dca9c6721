import pytest

from chainkit import build_chain

_criteria: dict[int, tuple[str, bool, float]] = {}


@pytest.fixture(scope="session")
def chain100():
    return build_chain(100)


@pytest.fixture(scope="session")
def chain200():
    return build_chain(200, seed=2)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    n, title = marker.args
    if report.when == "call" or report.failed:
        _criteria[n] = (title, report.passed, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, passed, secs = _criteria[n]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {n:>2}: {title} ({secs:.2f}s)")
