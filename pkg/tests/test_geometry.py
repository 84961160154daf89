import numpy as np
import pytest

from masharp.errors import GeometryError, OutsideDomainError, ResolutionError, UnboundedDomainError
from masharp.geometry import (
    BOUNDARY_CUT,
    INTERIOR,
    ConvexDomain,
    build_grid,
    diameter,
    dist_to_boundary,
    interior_shrink,
)

SQUARE_NORMALS = [[1, 0], [-1, 0], [0, 1], [0, -1]]


def square_polytope():
    return ConvexDomain.polytope(SQUARE_NORMALS, [1, 0, 1, 0])


def test_dist_box_nearest_face():
    dom = ConvexDomain.box([[-1, 1], [0, 2]])
    assert dist_to_boundary(dom, [0, 0.3]) == pytest.approx(0.3, abs=1e-15)


def test_dist_ball_radial():
    assert dist_to_boundary(ConvexDomain.ball([0, 0], 1), [0.5, 0]) == pytest.approx(0.5, abs=1e-15)


def test_dist_polytope_square_center():
    assert dist_to_boundary(square_polytope(), [0.5, 0.5]) == pytest.approx(0.5, abs=1e-15)


def test_dist_outside_raises():
    with pytest.raises(OutsideDomainError) as exc:
        dist_to_boundary(ConvexDomain.ball([0, 0], 1), [2.0, 0])
    assert exc.value.violation == pytest.approx(1.0)


@pytest.mark.parametrize(
    "dom, want",
    [
        (ConvexDomain.box([[-1, 1], [-1, 1]]), 2 * np.sqrt(2)),
        (ConvexDomain.ball([0, 0], 1), 2.0),
        (square_polytope(), np.sqrt(2)),
    ],
)
def test_diameter(dom, want):
    assert diameter(dom) == pytest.approx(want, rel=1e-14)


def test_empty_box_rejected():
    with pytest.raises(GeometryError):
        ConvexDomain.box([[0, 0], [0, 1]])


def test_unbounded_polytope_rejected():
    with pytest.raises(UnboundedDomainError):
        ConvexDomain.polytope([[1, 0], [-1, 0], [0, 1]], [1, 0, 1])


def test_non_unit_normals_rejected():
    with pytest.raises(GeometryError):
        ConvexDomain.polytope([[2, 0], [-1, 0], [0, 1], [0, -1]], [1, 0, 1, 0])


def test_ball_grid_spacing_and_center():
    grid = build_grid(ConvexDomain.ball([0, 0], 1), 33)
    assert grid.spacing == pytest.approx(2 / 32)
    center = np.flatnonzero(np.all(np.abs(grid.coords()) < 1e-12, axis=1))
    assert len(center) == 1 and grid.label[center[0]] == INTERIOR


def test_box_grid_interior_classification():
    grid = build_grid(ConvexDomain.box([[-1, 1], [0, 2]]), 17)
    x = grid.coords()
    want = (np.abs(x[:, 0]) < 1 - 1e-12) & (x[:, 1] > 1e-12) & (x[:, 1] < 2 - 1e-12)
    np.testing.assert_array_equal(grid.interior, want)


def test_rotated_square_membership_count():
    # diamond |x1| + |x2| < 1 as four half-spaces; count by brute force
    s = 1 / np.sqrt(2)
    dom = ConvexDomain.polytope([[s, s], [s, -s], [-s, s], [-s, -s]], [s] * 4)
    grid = build_grid(dom, 33)
    count = 0
    for x1, x2 in grid.coords():
        if abs(x1) + abs(x2) < 1 - 1e-12:
            count += 1
    assert int(grid.interior.sum()) == count


def test_boundary_cut_nodes_are_adjacent_to_interior():
    grid = build_grid(ConvexDomain.ball([0, 0], 1), 21)
    lab = grid.label.reshape(grid.shape)
    inside = lab == INTERIOR
    for i, j in zip(*np.nonzero(lab == BOUNDARY_CUT)):
        nb = [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]
        assert any(0 <= a < lab.shape[0] and 0 <= b < lab.shape[1] and inside[a, b] for a, b in nb)


def test_cut_fractions_in_unit_interval():
    grid = build_grid(ConvexDomain.ball([0, 0], 1), 25)
    assert np.all(grid.cut > 0) and np.all(grid.cut <= 1)


def test_resolution_floor():
    with pytest.raises(ResolutionError):
        build_grid(ConvexDomain.ball([0, 0], 1), 8)


def test_shrink_zero_is_interior():
    dom = ConvexDomain.ball([0, 0], 1)
    grid = build_grid(dom, 33)
    np.testing.assert_array_equal(interior_shrink(dom, grid, 0.0), grid.interior)


def test_shrink_ball_half():
    dom = ConvexDomain.ball([0, 0], 1)
    grid = build_grid(dom, 33)
    want = np.linalg.norm(grid.coords(), axis=1) < 0.5 - 1e-12
    np.testing.assert_array_equal(interior_shrink(dom, grid, 0.5), want & grid.interior)


def test_shrink_box_quarter():
    dom = ConvexDomain.box([[-1, 1], [0, 2]])
    grid = build_grid(dom, 33)
    x = grid.coords()
    want = (np.abs(x[:, 0]) < 0.75 - 1e-12) & (x[:, 1] > 0.25 + 1e-12) & (x[:, 1] < 1.75 - 1e-12)
    np.testing.assert_array_equal(interior_shrink(dom, grid, 0.25), want)


def test_box_as_polytope_matches_box():
    box = ConvexDomain.box([[-1, 1], [0, 2]])
    poly = ConvexDomain.polytope(SQUARE_NORMALS, [1, 1, 2, 0])
    gb, gp = build_grid(box, 17), build_grid(poly, 17)
    np.testing.assert_array_equal(gb.label, gp.label)
    x = gb.coords()[gb.interior_index]
    np.testing.assert_allclose(box.slack(x), poly.slack(x), atol=1e-12)
    np.testing.assert_allclose(gb.cut, gp.cut, atol=1e-12)
    assert diameter(box) == pytest.approx(diameter(poly), abs=1e-12)


def test_interior_distances_bounded_by_half_diameter():
    for dom in (ConvexDomain.ball([0.2, -0.1], 0.7), ConvexDomain.box([[0, 3], [0, 1]]), square_polytope()):
        grid = build_grid(dom, 21)
        d = dom.slack(grid.coords()[grid.interior_index])
        assert np.all(d > 0) and np.all(d <= diameter(dom) / 2 + 1e-12)


def test_domain_dict_roundtrip():
    for dom in (ConvexDomain.ball([0, 0, 0], 2), ConvexDomain.box([[0, 1], [0, 2]]), square_polytope()):
        again = ConvexDomain.from_dict(dom.to_dict())
        assert again.to_dict() == dom.to_dict()
