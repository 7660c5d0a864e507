import numpy as np
import pytest
from hypothesis import settings

from biotpit.assembly import build_system
from biotpit.benchmarks import trig_case, zero_case
from biotpit.mesh import build_uniform_mesh
from biotpit.timeloop import TimeGrid, prepare

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "oracle: example checked against an independent oracle")


def make_problem(case, nx, tau, n_time, precond="p1", domain=None):
    mesh = build_uniform_mesh(nx, nx, domain or case.domain)
    system = build_system(mesh, case, tau)
    return prepare(system, case, TimeGrid(tau, n_time), precond)


@pytest.fixture(scope="session")
def trig4():
    case = trig_case()
    return case, build_system(build_uniform_mesh(4, 4), case, 1 / 16)


@pytest.fixture(scope="session")
def trig_problem8():
    return make_problem(trig_case(), 8, 1 / 32, 12)


@pytest.fixture(scope="session")
def zero_problem():
    return make_problem(zero_case(), 4, 0.1, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


# --------------------------------------------------------------------------
# acceptance summary: one line per criterion, printed at the end of the run

ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
