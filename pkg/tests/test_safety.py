import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from src.continuum.errors import FollowerOutsideTriangle, InfeasibleMargins, SingularTransform
from src.continuum.formation import (
    HomogeneousTransform,
    Vec2,
    build_formation,
    equilateral_triangle,
    paper_formation,
    triangle_area,
)
from src.continuum.safety import (
    bounding_triangle,
    certify_plan,
    compute_margins,
    deformation_eigenvalues,
    signed_boundary_distance,
)


def scaled(s, d=(0.0, 0.0)):
    return HomogeneousTransform(np.eye(2) * s, Vec2(*d))


def test_margins_of_five_agent_team(paper_spec):
    m = compute_margins(paper_spec)
    assert m.d_s == pytest.approx(1.7277, abs=1e-3)
    assert m.d_b == pytest.approx(0.8638, abs=1e-3)
    assert m.d_l == pytest.approx(0.68)
    assert m.delta_max == pytest.approx(0.5838, abs=1e-3)
    assert m.lambda_min == pytest.approx(0.7872, abs=1e-3)


def test_permitted_edge_matches_contraction(paper_spec):
    report = certify_plan(paper_spec, [(0.0, scaled(1.0))])
    assert report.passed
    assert report.permitted_min_edge_m == pytest.approx(3.716, abs=2e-3)
    assert report.guarantees


def test_contraction_at_exactly_lambda_min_passes(paper_spec):
    lam = compute_margins(paper_spec).lambda_min
    report = certify_plan(paper_spec, [(0.0, scaled(1.0)), (1.0, scaled(lam))])
    assert report.passed
    assert report.margin == pytest.approx(0.0, abs=1e-9)
    assert report.worst_t_s == 1.0


def test_contraction_below_lambda_min_fails(paper_spec):
    lam = compute_margins(paper_spec).lambda_min
    report = certify_plan(paper_spec, [(0.0, scaled(1.0)), (2.5, scaled(lam - 0.01))])
    assert not report.passed
    assert report.failed_samples == 1
    assert report.worst_t_s == 2.5
    assert report.guarantees == []
    assert "FAIL" in report.pretty_message


def test_near_singular_transform_fails_certificate(paper_spec):
    q = np.array([[1.0, 0.0], [0.0, 1e-14]])
    report = certify_plan(paper_spec, [(0.0, HomogeneousTransform(q, Vec2(0.0, 0.0)))])
    assert not report.passed
    with pytest.raises(SingularTransform):
        deformation_eigenvalues(HomogeneousTransform(q, Vec2(0.0, 0.0)))


def test_delta_above_delta_max_never_certifies(caplog):
    spec = paper_formation(delta=0.6)
    report = certify_plan(spec, [(0.0, scaled(1.0))])
    assert report.margins.lambda_min > 1.0
    assert not report.passed
    assert "exceeds delta_max" in caplog.text


def test_infeasible_epsilon_rejected():
    with pytest.raises(InfeasibleMargins):
        compute_margins(paper_formation(epsilon=0.9))


def test_follower_on_boundary_rejected():
    verts = equilateral_triangle(3.0)
    mid = (verts[0] + verts[1]) / 2.0
    spec = build_formation(("a", "b", "c"), dict(zip("abc", verts)), ("f",),
                           {"f": ("a", "b", "c")}, 0.1, 0.1, weights={"f": (0.5, 0.5, 0.0)})
    assert (spec.initial_positions["f"] - mid).norm() < 1e-12
    with pytest.raises(FollowerOutsideTriangle):
        compute_margins(spec)


def test_eigenvalues_of_rotation_scaling():
    c, s = math.cos(0.7), math.sin(0.7)
    q = np.array([[c, -s], [s, c]]) @ np.diag([0.8, 1.3])
    l1, l2 = deformation_eigenvalues(HomogeneousTransform(q, Vec2(1.0, 1.0)))
    assert (l1, l2) == pytest.approx((0.8, 1.3), abs=1e-12)


@settings(max_examples=500, deadline=None)
@given(st.lists(st.floats(-3.0, 3.0), min_size=4, max_size=4))
def test_eigenvalues_match_numpy_svd(entries):
    q = np.array(entries).reshape(2, 2)
    if np.linalg.det(q) < 0.05:
        return
    l1, l2 = deformation_eigenvalues(HomogeneousTransform(q, Vec2(0.0, 0.0)))
    sv = np.linalg.svd(q, compute_uv=False)
    assert l1 <= l2
    assert (l1, l2) == pytest.approx((sv[1], sv[0]), rel=1e-6, abs=1e-9)


def test_signed_boundary_distance_sign():
    tri = [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)]
    assert signed_boundary_distance((0.5, 0.5), tri) == pytest.approx(0.5)
    assert signed_boundary_distance((1.0, -1.0), tri) == pytest.approx(-1.0)
    assert signed_boundary_distance((0.5, 0.5), list(reversed(tri))) == pytest.approx(0.5)


def test_bounding_triangle_sides_are_offset(paper_spec):
    lead = paper_spec.leader_initial
    box = bounding_triangle(lead, 0.68)
    for v in lead:
        assert signed_boundary_distance(v, box.vertices) == pytest.approx(0.68, abs=1e-9)


def test_bounding_triangle_zero_offset_is_identity(paper_spec):
    lead = paper_spec.leader_initial
    box = bounding_triangle(lead, 0.0)
    for got, want in zip(box.vertices, lead):
        assert got == pytest.approx(tuple(want), abs=1e-9)
    with pytest.raises(ValueError):
        bounding_triangle(lead, -0.1)


coord = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
offset = st.floats(min_value=0.0, max_value=2.0)


@st.composite
def general_triangles(draw):
    a, b, c = (Vec2(draw(coord), draw(coord)) for _ in range(3))
    area = abs(triangle_area(a, b, c))
    edges = [(a - b).norm(), (b - c).norm(), (c - a).norm()]
    assume(area > 1.0 and area > 0.05 * max(edges) ** 2)
    return a, b, c


def centroid(tri):
    return Vec2(sum(p[0] for p in tri) / 3.0, sum(p[1] for p in tri) / 3.0)


def incenter(tri):
    a, b, c = (Vec2(*p) for p in tri)
    la, lb, lc = (b - c).norm(), (c - a).norm(), (a - b).norm()
    return (a * la + b * lb + c * lc) / (la + lb + lc)


def edges(tri):
    return [(Vec2(*tri[i]) - Vec2(*tri[(i + 1) % 3])).norm() for i in range(3)]


@pytest.mark.parametrize("edge,d_l", [(4.72, 0.68), (3.0, 0.1), (1.0, 2.0)])
def test_equilateral_bounding_edge(edge, d_l):
    box = bounding_triangle(equilateral_triangle(edge, (1.0, -2.0)), d_l)
    for side in edges(box.vertices):
        assert side == pytest.approx(edge + 2.0 * math.sqrt(3.0) * d_l, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.5, 10.0), st.tuples(coord, coord), st.floats(-180.0, 180.0), offset)
def test_equilateral_bounding_triangle_shares_centroid(edge, center, rotation, d_l):
    lead = equilateral_triangle(edge, center, rotation)
    box = bounding_triangle(lead, d_l)
    assert (centroid(box.vertices) - centroid(lead)).norm() < 1e-9


@settings(max_examples=200, deadline=None)
@given(general_triangles(), offset)
def test_bounding_triangle_shares_incenter(lead, d_l):
    box = bounding_triangle(lead, d_l)
    assert (incenter(box.vertices) - incenter(lead)).norm() < 1e-7


@settings(max_examples=200, deadline=None)
@given(general_triangles(), offset)
def test_bounding_triangle_contains_leading_triangle(lead, d_l):
    box = bounding_triangle(lead, d_l)
    for v in lead:
        assert signed_boundary_distance(v, box.vertices) == pytest.approx(d_l, abs=1e-7)
    assert signed_boundary_distance(centroid(lead), box.vertices) > d_l


def test_centroid_follower_sits_half_circumradius_from_boundary():
    verts = equilateral_triangle(3.0)
    spec = build_formation(("a", "b", "c"), dict(zip("abc", verts)), ("f",), {"f": ("a", "b", "c")},
                           0.1, 0.1, follower_positions={"f": (0.0, 0.0)})
    circumradius = 3.0 / math.sqrt(3.0)
    m = compute_margins(spec)
    assert m.d_b == pytest.approx(circumradius / 2.0, abs=1e-12)
    assert m.d_s == pytest.approx(circumradius, abs=1e-12)


def test_agents_exactly_two_epsilon_apart_are_infeasible():
    leaders = {"a": (0.0, 0.0), "b": (4.0, 0.0), "c": (0.0, 4.0)}
    spec = build_formation(("a", "b", "c"), leaders, ("f", "g"),
                           {"f": ("a", "b", "c"), "g": ("a", "b", "c")}, 0.5, 0.1,
                           follower_positions={"f": (1.0, 1.0), "g": (2.0, 1.0)})
    with pytest.raises(InfeasibleMargins):
        compute_margins(spec)


def test_lambda_min_grows_with_delta():
    deltas = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.58]
    lambdas = [compute_margins(paper_formation(delta=d)).lambda_min for d in deltas]
    assert all(a < b for a, b in zip(lambdas, lambdas[1:]))
    assert lambdas[-1] < 1.0
