import pytest

from autonomy_lab import GridSpec, ModelParams, solve_hjb

_criteria = {}


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def default_solution(params):
    """HJB solution on the default 200 x 100 grid (a few seconds)."""
    return solve_hjb(params, GridSpec.for_params(params))


@pytest.fixture(scope="session")
def coarse_solution(params):
    return solve_hjb(params, GridSpec.for_params(params, n_a=60, n_i=50))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _criteria[marker.args[0]] = (marker.args[1], "PASS" if rep.passed else "FAIL")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, status = _criteria[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {title}")
