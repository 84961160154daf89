import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from masharp.geometry import ConvexDomain, build_grid
from masharp.solver import GridField, ProblemSpec, solve_dirichlet

settings.register_profile("masharp", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("masharp")


def sample(grid, fn) -> GridField:
    """GridField holding fn(x) at interior nodes and 0 elsewhere."""
    idx = grid.interior_index
    return GridField.from_interior(grid, fn(grid.coords()[idx]))


@pytest.fixture(scope="session")
def box2d_33():
    """Converged f = 1 solution on (-1, 1) x (0, 2), 33 nodes per axis."""
    dom = ConvexDomain.box([[-1, 1], [0, 2]])
    grid = build_grid(dom, 33)
    u, rep = solve_dirichlet(ProblemSpec(dom, "1", 1.0, 1.0), grid)
    assert rep.converged
    return u, rep


@pytest.fixture(scope="session")
def box2d_129():
    dom = ConvexDomain.box([[-1, 1], [0, 2]])
    coarse = build_grid(dom, 65)
    spec = ProblemSpec(dom, "1", 1.0, 1.0)
    uc, _ = solve_dirichlet(spec, coarse)
    grid = build_grid(dom, 129)
    u, rep = solve_dirichlet(spec, grid, initial=uc.prolong(grid))
    assert rep.converged
    return u, rep


@pytest.fixture(scope="session")
def disc_65():
    dom = ConvexDomain.ball([0, 0], 1)
    grid = build_grid(dom, 65)
    u, rep = solve_dirichlet(ProblemSpec(dom, "1", 1.0, 1.0), grid)
    assert rep.converged
    return u, rep


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


@pytest.fixture(scope="session")
def box2d_257():
    """The 257^2 f = 1 box run, solved coarse to fine as the runner does.

    Returns (field, report, seconds spent solving).
    """
    import time

    from masharp.config import from_dict
    from masharp.runner import solve_sequence

    cfg = from_dict(
        {
            "problem": {"domain": {"kind": "box", "intervals": [[-1, 1], [0, 2]]}, "f": "1", "lambda": 1, "Lambda": 1},
            "grid": [33, 65, 129, 257],
            "suites": ["growth"],
        }
    )
    t0 = time.perf_counter()
    runs = solve_sequence(cfg)
    return runs[-1].field, runs[-1].report, time.perf_counter() - t0
