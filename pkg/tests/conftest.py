import pytest

from pnp_twogrid.mesh import build_unit_cube_mesh
from pnp_twogrid.verification import ManufacturedSolution, source_terms


def pytest_addoption(parser):
    parser.addoption("--heavy", action="store_true", default=False, help="run h = 1/64 cases")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--heavy"):
        return
    skip = pytest.mark.skip(reason="heavy tier; pass --heavy to run")
    for item in items:
        if "heavy" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def sol():
    return ManufacturedSolution()


@pytest.fixture(scope="session")
def sources():
    return source_terms()


@pytest.fixture(scope="session")
def mesh_cache():
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = build_unit_cube_mesh(n)
        return cache[n]

    return get


# -- acceptance report -------------------------------------------------------

_REPORT = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, label): acceptance criterion id and label")
    config.stash[_REPORT] = []


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return rep
    if rep.when == "call" or (rep.when == "setup" and rep.skipped):
        detail = dict(item.user_properties).get("detail", "")
        if rep.skipped:
            status, detail = "SKIP", "heavy tier; pass --heavy"
        else:
            status = "PASS" if rep.passed else "FAIL"
        item.config.stash[_REPORT].append((*marker.args, status, detail))
    return rep


def pytest_terminal_summary(terminalreporter, config):
    rows = config.stash.get(_REPORT, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for cid, label, status, detail in rows:
        line = f"[{status}] criterion {cid}: {label}"
        terminalreporter.write_line(line + (f" -- {detail}" if detail else ""))
