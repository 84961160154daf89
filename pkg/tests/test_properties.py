"""Randomised invariants; the hypothesis profile in conftest runs 100 examples each."""

import json

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import sample
from masharp.config import from_dict
from masharp.geometry import ConvexDomain, build_grid, interior_shrink
from masharp.harness import nested_families
from masharp.hessian import hessian_field
from masharp.runner import run_config
from masharp.solver import ProblemSpec, solve_dirichlet

coef = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def boxes(draw):
    lo = [draw(st.floats(-2, 1)) for _ in range(2)]
    w = [draw(st.floats(1.0, 2.0)) for _ in range(2)]
    return ConvexDomain.box([[a, a + b] for a, b in zip(lo, w)])


@given(dom=boxes(), n=st.integers(17, 29), a=coef, b=coef, c=coef, d=coef, e=coef)
def test_quadratic_exactness(dom, n, a, b, c, d, e):
    u = sample(build_grid(dom, n), lambda x: a * x[:, 0] ** 2 + b * x[:, 0] * x[:, 1] + c * x[:, 1] ** 2 + d * x[:, 0] + e)
    H = hessian_field(u)
    want = np.array([[2 * a, b], [b, 2 * c]])
    assert np.abs(H.hess - want).max() <= 1e-10


@given(
    n=st.integers(9, 13),
    base=st.floats(0.5, 2.0),
    a=st.floats(0, 1),
    bump=st.floats(0, 1),
    centre=st.tuples(st.floats(0.2, 0.8), st.floats(0.2, 0.8)),
)
def test_comparison_principle(n, base, a, bump, centre):
    dom = ConvexDomain.box([[0, 1], [0, 1]])
    grid = build_grid(dom, n)
    f1 = f"{base} + {a}*x1*x1"
    f2 = f"{f1} + {bump}*exp(-10*((x1 - {centre[0]})*(x1 - {centre[0]}) + (x2 - {centre[1]})*(x2 - {centre[1]})))"
    hi = base + a + bump
    u1, r1 = solve_dirichlet(ProblemSpec(dom, f1, base, hi), grid)
    u2, r2 = solve_dirichlet(ProblemSpec(dom, f2, base, hi), grid)
    assert r1.converged and r2.converged
    assert np.all(u1.values >= u2.values - 1e-8 * u2.sup_norm())


@given(n=st.integers(9, 17), c=st.floats(0.1, 10), a=st.floats(0, 1), b=st.floats(0, 1))
def test_scaling_law(n, c, a, b):
    dom = ConvexDomain.ball([0, 0], 1)
    grid = build_grid(dom, n)
    g = f"1 + {a}*x1*x1 + {b}*x2*x2"
    hi = 1 + a + b
    u1, r1 = solve_dirichlet(ProblemSpec(dom, g, 1.0, hi), grid)
    uc, rc = solve_dirichlet(ProblemSpec(dom, f"{c}*({g})", c, c * hi), grid)
    assert r1.converged and rc.converged
    # det is 2-homogeneous in the plane, so u_c = c^(1/2) u_1
    assert np.abs(uc.values - np.sqrt(c) * u1.values).max() <= 1e-7 * uc.sup_norm()


@given(
    kind=st.sampled_from(["box", "ball"]),
    n=st.integers(9, 25),
    hs=st.lists(st.floats(0.0, 0.5), min_size=2, max_size=6),
    tilt=st.floats(-0.2, 0.2),
)
def test_nested_sublevel_and_shrink_families(kind, n, hs, tilt):
    dom = ConvexDomain.box([[-1, 1], [0, 2]]) if kind == "box" else ConvexDomain.ball([0, 0], 1)
    grid = build_grid(dom, n)
    c = dom.bounding_ball()[0]
    u = sample(grid, lambda x: np.sum((x - c) ** 2, axis=1) - 2.5 + tilt * x[:, 0])
    assert nested_families(u, hs)
    masks = [interior_shrink(dom, grid, h) for h in sorted(hs)]
    for small, big in zip(masks, masks[1:]):
        assert np.all(big <= small)


@settings(max_examples=100)
@given(
    n=st.integers(9, 13),
    f=st.sampled_from(["1", "1 + x1*x1", "2 - x2", "exp(x1)"]),
    width=st.sampled_from([1, 2]),
    scale=st.floats(0.5, 2.0),
)
def test_artifacts_are_deterministic(tmp_path_factory, n, f, width, scale):
    doc = {
        "name": "det",
        "problem": {"domain": {"kind": "box", "intervals": [[0, 1], [0, 1]]}, "f": f"{scale}*({f})", "lambda": 0.5 * scale, "Lambda": 3 * scale},
        "grid": [n],
        "solver": {"stencil_width": width},
        "suites": ["hadamard", "growth"],
    }
    outs = []
    for _ in range(2):
        out = tmp_path_factory.mktemp("det")
        run_config(from_dict(json.loads(json.dumps(doc))), out=out, echo=None)
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
    assert "report.json" in outs[0] and "solution.csv" in outs[0]
