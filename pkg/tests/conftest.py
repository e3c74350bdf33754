import numpy as np
import pytest

from gnse.bench import ManufacturedCase, make_problem
from gnse.bench.study import solve_sequence
from gnse.constitutive import StressParams
from gnse.fem import build_space
from gnse.mesh import refine_to
from gnse.solver import ProblemData, weak_rhs_action

PATCH_STRESS = StressParams(2.0, 1e-5, 0.1)


def patch_v(X):
    return np.stack([X[..., 1], X[..., 0]], axis=-1)


def patch_grad(X):
    G = np.zeros(X.shape[:-1] + (2, 2))
    G[..., 0, 1] = 1.0
    G[..., 1, 0] = 1.0
    return G


def patch_q(X):
    return X[..., 0] - 0.5


def patch_problem(space, stress=PATCH_STRESS):
    """Problem whose exact solution ``v = (y, x)``, ``q = x - 1/2`` is discrete."""
    return ProblemData(stress, space, 0.0, patch_v,
                       weak_rhs_action(stress, patch_v, patch_grad, patch_q))


@pytest.fixture(scope="session")
def meshes():
    return refine_to(5)


@pytest.fixture(scope="session")
def benchmark_solves():
    """Cached ``(space, state, data)`` per (pair, case, p, level) from nested solves."""
    cache = {}

    def get(pair, case_id, p, level):
        key = (pair, case_id, p)
        if (key, level) not in cache:
            case = ManufacturedCase(case_id, p)
            for mesh, space, state, report in solve_sequence(pair, case, level):
                cache[(key, mesh.level)] = (space, state, make_problem(case, space), report)
        return cache[(key, level)]

    return get


@pytest.fixture
def th_space(meshes):
    return build_space(meshes[2], "th")


# acceptance criteria outcomes, printed once at the end of the session
AC_RESULTS = {}


def record_ac(name, ok, detail):
    line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
    AC_RESULTS[name] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not AC_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(AC_RESULTS, key=lambda s: int(s[2:])):
        terminalreporter.write_line(AC_RESULTS[name])
