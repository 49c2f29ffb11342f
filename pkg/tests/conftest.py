import warnings

import pytest

from oppsim.graph import GraphParams, generate_graph


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale runs (minutes)")


@pytest.fixture(scope="session")
def desk_graph():
    return generate_graph(GraphParams(n=50, n_communities=5, maxc=20, seed=1))


@pytest.fixture(scope="session")
def default_graph():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return generate_graph(GraphParams(n_communities=14))


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
