import dataclasses

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import sample
from masharp import harness
from masharp.errors import GeometryError, ResolutionError
from masharp.geometry import ConvexDomain, build_grid
from masharp.hessian import hessian_field

BOX = ConvexDomain.box([[-1, 1], [0, 2]])
DISC = ConvexDomain.ball([0, 0], 1)


def disc_exact(n=65):
    return sample(build_grid(DISC, n), lambda x: 0.5 * (np.sum(x**2, axis=1) - 1))


def test_closed_forms():
    assert harness.slicing_fraction_a(2) == 0.5
    assert harness.slicing_fraction_a(3) == 0.75
    assert harness.holder_exponent(2, 1.1) == pytest.approx(2 / 2.1)
    assert harness.holder_exponent(3, 1.1) == pytest.approx(2 / 3)
    t = harness.degenerate_targets(2, -1.0)
    assert t["u"] == pytest.approx(2 / 3) and t["dnn"] == pytest.approx(-4 / 3)
    assert t["non_integrability"] == pytest.approx(3 / 4)


def test_box_frame_normalisation():
    frame = harness.BoxFrame.of(ConvexDomain.box([[0, 4], [1, 2]]))
    np.testing.assert_allclose(frame.to_unit(np.array([[0.0, 1.0], [4.0, 2.0], [2.0, 1.5]])), [[-1, 0], [1, 2], [0, 1]])
    # u(x) = v(y) with y = (x - lower)/s: D^2_x u = S^-1 D^2_y v S^-1
    np.testing.assert_allclose(frame.hessian(np.eye(2)), np.diag([4.0, 0.25]))
    assert frame.lam(1.0) == pytest.approx(4 * 0.25)
    with pytest.raises(GeometryError):
        harness.BoxFrame.of(DISC)


def test_growth_on_disc_identity_hessian():
    u = disc_exact(129)
    H = hessian_field(u)
    res = harness.growth_suite(u, H, bands={"hessian_exponent": (-0.1, 0.1)}, window=(2, 16))
    assert all(abs(row[3] - 1.0) < 1e-10 for row in res["band_table"])
    assert res["checks"]["hessian_exponent"]["status"] == "pass"
    assert abs(res["fits"]["u_exponent"]["exponent"] - 1.0) < 0.1
    assert res["passed"]
    assert res["fits"]["u_exponent"]["n_points"] >= 6


def test_growth_unknown_band_rejected():
    u = disc_exact(129)
    with pytest.raises(KeyError):
        harness.growth_suite(u, hessian_field(u), bands={"nope": (0, 1)}, window=(2, 16))


def test_pogorelov_on_disc_bounded_by_quarter():
    u = disc_exact()
    res = harness.pogorelov_suite(u, hessian_field(u), hs=[0.2, 0.1, 0.05])
    assert all(r["R"] <= 0.25 + 1e-12 for r in res["table"])
    assert res["passed"]


def test_pogorelov_levels_must_be_resolved():
    u = disc_exact(33)
    with pytest.raises(ResolutionError):
        harness.pogorelov_suite(u, hessian_field(u), hs=[0.001, 0.2])


def test_nested_families(box2d_33):
    u, _ = box2d_33
    assert harness.nested_families(u, [0.02, 0.05, 0.1, 0.2, 0.3])


def synthetic_inverse_distance(n=257):
    grid = build_grid(BOX, n)
    u = sample(grid, lambda x: 0.5 * x[:, 0] ** 2)
    H = hessian_field(u)
    return dataclasses.replace(H, norm=H.dist**-1.0)


def test_integrability_against_exact_integral():
    # on the 2 x 2 box |{dist > t}| = (2 - 2t)^2, so the increment of
    # int dist^-delta over dist in (h, 2h] is int_h^2h 8 (1 - t) t^-delta dt
    H = synthetic_inverse_distance()
    res = harness.integrability_sweep(H, [0.5, 1.25])
    hs = np.array(res["h"])
    for delta, beta in zip(res["delta"], res["beta"]):
        J = [integrate.quad(lambda t: 8 * (1 - t) * t**-delta, h, 2 * h)[0] for h in hs]
        exact = stats.linregress(np.log(1 / hs), np.log(J)).slope
        assert abs(beta - exact) < 0.06
    assert res["class"] == ["convergent", "divergent"]


def test_integrability_needs_four_levels():
    H = hessian_field(disc_exact(33))
    with pytest.raises(ResolutionError):
        harness.integrability_sweep(H, [0.5, 1.0])


def test_integrability_on_disc_bounded_hessian():
    u = disc_exact(257)
    res = harness.integrability_sweep(hessian_field(u), [0.5, 1.0, 1.5, 2.0])
    assert all(b < 0.05 for b in res["beta"])
    assert res["delta_star"] is None


def test_integrability_checks_report_missing_crossing():
    res = {"delta_star": None, "delta": [0.5], "class": ["convergent"], "beta": [-1.0]}
    checks = harness.integrability_checks(res, (0.85, 1.15), {"0.5": "convergent"})
    assert checks["delta_star"].status == "inconclusive"
    assert checks["class_0.5"].passed


def test_slicing_flat_tangential_direction():
    # D11 = 0 everywhere: every node of every slice lies in E
    grid = build_grid(BOX, 129)
    u = sample(grid, lambda x: x[:, 1] ** 2 - 2 * x[:, 1])
    res = harness.slicing_suite(u, hessian_field(u), [0.125, 0.25], 1.0)
    assert all(r["fraction"] == 1.0 for r in res["reports"])


def test_slicing_constant_chain(box2d_129):
    u, _ = box2d_129
    H = hessian_field(u)
    res = harness.slicing_suite(u, H, [0.125, 0.25], 1.0)
    assert res["C1"] == 4 * res["C0"]
    assert res["a"] == 0.5
    for r in res["reports"]:
        x = r["x_n"]
        assert r["threshold"] == 2.0 * res["C1"] * x * abs(np.log(x))
        assert r["lower_bound"] == res["lambda_normalised"] / r["threshold"]
        assert r["hadamard_consistent"]
        assert r["fraction"] >= 0.5 and r["bound_holds"]
    checks = harness.slicing_checks(res)
    assert all(c.passed for c in checks.values())


def test_slicing_requires_box():
    u = disc_exact(65)
    with pytest.raises(GeometryError):
        harness.slicing_suite(u, hessian_field(u), [0.25], 1.0)


def test_degenerate_suite_with_s_zero_is_growth(box2d_129):
    u, _ = box2d_129
    H = hessian_field(u)
    bands = {"flat_hessian_exponent": (-1.4, -0.8)}
    assert harness.degenerate_exponent_suite(u, H, 0.0, bands=bands) == harness.growth_suite(u, H, bands=bands)


def test_box_growth_lower_sandwich_and_gradient_bound(box2d_129):
    u, _ = box2d_129
    res = harness.growth_suite(u, hessian_field(u))
    assert res["checks"]["lower_sandwich"]["status"] == "pass"
    assert res["checks"]["gradient_bound"]["status"] == "pass"
    assert res["constants"]["a"] == 0.5


def test_box_pogorelov_inclusion_every_level(box2d_257):
    u = box2d_257[0]
    res = harness.pogorelov_suite(u, hessian_field(u))
    assert len(res["table"]) == 5
    assert all(r["inclusion"] for r in res["table"])
    assert res["checks"]["nested"]["status"] == "pass"


def test_integrability_classifier_monotone_on_solution(box2d_257):
    u = box2d_257[0]
    res = harness.integrability_sweep(hessian_field(u), [0.25, 0.5, 0.75, 1.0, 1.25, 1.5])
    assert res["monotone"]
