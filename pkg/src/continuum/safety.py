"""Collision-avoidance certificate for a planned deformation.

compute_margins derives the admissible deviation and the smallest admissible
deformation from the initial geometry; certify_plan checks a sampled transform
sequence against it.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from .errors import CollinearLeaders, FollowerOutsideTriangle, InfeasibleMargins, SingularTransform
from .formation import COLLINEAR_AREA, FormationSpec, HomogeneousTransform, Vec2, pairwise_min_distance, triangle_area

logger = logging.getLogger(__name__)

SINGULAR_TOL = 1e-12
CERTIFY_TOL = 1e-12

GUARANTEES = [
    "no inter-agent collision (pairwise distance >= 2 epsilon)",
    "every follower stays inside the leading triangle",
    "every agent stays inside the bounding triangle",
]


class SafetyMargins(BaseModel):
    epsilon: float
    delta: float
    d_s: float = Field(description="minimum initial inter-agent separation (m)")
    d_b: float = Field(description="minimum initial follower distance to the leading-triangle boundary (m)")
    d_l: float = Field(description="offset between leading and bounding triangle sides, delta + epsilon (m)")
    delta_max: float
    lambda_min: float


class BoundingTriangle(BaseModel):
    vertices: Tuple[Tuple[float, float], Tuple[float, float], Tuple[float, float]]


class CertificateSample(BaseModel):
    t_s: float
    lambda_1: float
    lambda_2: float
    holds: bool


class CertificateReport(BaseModel):
    passed: bool
    margins: SafetyMargins
    samples: List[CertificateSample]
    worst_t_s: Optional[float] = None
    worst_min_singular_value: Optional[float] = None
    margin: Optional[float] = None
    failed_samples: int = 0
    guarantees: List[str] = []
    permitted_min_edge_m: float
    min_leader_edge_m: Optional[float] = None
    pretty_message: str


def _segment_distance(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    ax, ay = a
    abx, aby = b[0] - ax, b[1] - ay
    apx, apy = p[0] - ax, p[1] - ay
    denom = abx * abx + aby * aby
    s = 0.0 if denom == 0.0 else min(1.0, max(0.0, (apx * abx + apy * aby) / denom))
    return math.hypot(apx - s * abx, apy - s * aby)


def signed_boundary_distance(point: Sequence[float], triangle: Sequence[Sequence[float]]) -> float:
    """Distance from `point` to the triangle boundary; positive inside, negative outside."""
    a, b, c = triangle
    dist = min(_segment_distance(point, a, b), _segment_distance(point, b, c), _segment_distance(point, c, a))
    orientation = math.copysign(1.0, triangle_area(a, b, c))
    inside = all(orientation * triangle_area(u, v, point) >= 0.0 for u, v in ((a, b), (b, c), (c, a)))
    return dist if inside else -dist


def compute_margins(spec: FormationSpec) -> SafetyMargins:
    lead = spec.leader_initial
    d_s = pairwise_min_distance(spec.initial_positions.values())
    d_b = math.inf
    for f in spec.followers:
        dist = signed_boundary_distance(spec.initial_positions[f], lead)
        if dist <= 0.0:
            raise FollowerOutsideTriangle(f"follower {f} is not strictly inside the leading triangle ({dist:.4f} m)")
        d_b = min(d_b, dist)
    if not spec.followers:
        # no followers: only the separation term constrains the deviation
        d_b = math.inf
    delta_max = min((d_s - 2.0 * spec.epsilon) / 2.0, d_b - spec.epsilon)
    if delta_max <= 0.0:
        raise InfeasibleMargins(
            f"delta_max = {delta_max:.4f} m; the initial formation is too tight for epsilon = {spec.epsilon} m"
        )
    lambda_min = (spec.delta + spec.epsilon) / (delta_max + spec.epsilon)
    if spec.delta > delta_max:
        logger.warning("delta %.3f m exceeds delta_max %.3f m; no deformation can be certified",
                       spec.delta, delta_max)
    return SafetyMargins(
        epsilon=spec.epsilon,
        delta=spec.delta,
        d_s=d_s,
        d_b=d_b,
        d_l=spec.delta + spec.epsilon,
        delta_max=delta_max,
        lambda_min=lambda_min,
    )


def deformation_eigenvalues(t: HomogeneousTransform) -> Tuple[float, float]:
    """Singular values of Q (eigenvalues of (Q^T Q)^(1/2)), ascending.

    Closed form for the symmetric 2x2 matrix Q^T Q = [[a, b], [b, c]].
    """
    q = t.q
    if abs(t.determinant) < SINGULAR_TOL:
        raise SingularTransform(f"det(Q) = {t.determinant:.3e}")
    a = q[0, 0] * q[0, 0] + q[1, 0] * q[1, 0]
    c = q[0, 1] * q[0, 1] + q[1, 1] * q[1, 1]
    b = q[0, 0] * q[0, 1] + q[1, 0] * q[1, 1]
    mean = 0.5 * (a + c)
    radius = math.hypot(0.5 * (a - c), b)
    return float(math.sqrt(max(mean - radius, 0.0))), float(math.sqrt(mean + radius))


def _line_intersection(p: Vec2, u: Vec2, q: Vec2, v: Vec2) -> Vec2:
    cross = u.x * v.y - u.y * v.x
    w = q - p
    s = (w.x * v.y - w.y * v.x) / cross
    return p + u * s


def bounding_triangle(leading: Sequence[Sequence[float]], d_l: float) -> BoundingTriangle:
    """Offset every side of the leading triangle outward by d_l and intersect the offset lines."""
    verts = [Vec2.of(*p) for p in leading]
    area = triangle_area(*verts)
    if abs(area) < COLLINEAR_AREA:
        raise CollinearLeaders(f"leading triangle is degenerate: {verts}")
    if d_l < 0.0:
        raise ValueError(f"d_l must be non-negative, got {d_l}")
    sign = 1.0 if area > 0 else -1.0
    lines = []
    for i in range(3):
        a, b = verts[i], verts[(i + 1) % 3]
        edge = b - a
        normal = Vec2(edge.y, -edge.x) * (sign / edge.norm())
        lines.append((a + normal * d_l, edge))
    out = []
    for i in range(3):
        p, u = lines[i - 1]
        q, v = lines[i]
        x = _line_intersection(p, u, q, v)
        out.append((x.x, x.y))
    return BoundingTriangle(vertices=tuple(out))


def _leader_min_edge(spec: FormationSpec, t: HomogeneousTransform) -> float:
    pts = [t.apply(p) for p in spec.leader_initial]
    return min((pts[i] - pts[(i + 1) % 3]).norm() for i in range(3))


def certify_plan(spec: FormationSpec,
                 transforms: Sequence[Tuple[float, HomogeneousTransform]],
                 margins: Optional[SafetyMargins] = None) -> CertificateReport:
    """Check lambda_min <= min(lambda_1, lambda_2) at every sampled transform."""
    margins = margins or compute_margins(spec)
    lam_min = margins.lambda_min
    samples: List[CertificateSample] = []
    worst: Optional[CertificateSample] = None
    min_edge: Optional[float] = None
    for t_s, tr in transforms:
        try:
            l1, l2 = deformation_eigenvalues(tr)
        except SingularTransform:
            l1, l2 = 0.0, 0.0
        holds = tr.determinant > 0.0 and l1 >= lam_min - CERTIFY_TOL
        sample = CertificateSample(t_s=t_s, lambda_1=l1, lambda_2=l2, holds=holds)
        samples.append(sample)
        if worst is None or l1 < worst.lambda_1:
            worst = sample
        edge = _leader_min_edge(spec, tr)
        min_edge = edge if min_edge is None else min(min_edge, edge)

    failed = sum(1 for s in samples if not s.holds)
    passed = failed == 0
    init_edge = _leader_min_edge(spec, HomogeneousTransform.identity())
    report = CertificateReport(
        passed=passed,
        margins=margins,
        samples=samples,
        worst_t_s=worst.t_s if worst else None,
        worst_min_singular_value=worst.lambda_1 if worst else None,
        margin=(worst.lambda_1 - lam_min) if worst else None,
        failed_samples=failed,
        guarantees=list(GUARANTEES) if passed else [],
        permitted_min_edge_m=lam_min * init_edge,
        min_leader_edge_m=min_edge,
        pretty_message="",
    )
    report.pretty_message = render_certificate(report)
    if passed:
        logger.info("certificate passed (worst singular value %.4f, lambda_min %.4f)",
                    report.worst_min_singular_value or 1.0, lam_min)
    else:
        logger.warning("certificate failed at %d of %d samples", failed, len(samples))
    return report


def render_certificate(report: CertificateReport) -> str:
    m = report.margins
    lines = [
        "Safety certificate",
        f"  epsilon          {m.epsilon:.3f} m",
        f"  delta            {m.delta:.3f} m",
        f"  D_s              {m.d_s:.4f} m",
        f"  D_b              {m.d_b:.4f} m",
        f"  D_l              {m.d_l:.4f} m",
        f"  delta_max        {m.delta_max:.4f} m",
        f"  lambda_min       {m.lambda_min:.4f}",
        f"  permitted edge   {report.permitted_min_edge_m:.3f} m",
    ]
    if report.worst_min_singular_value is not None:
        lines.append(f"  min singular     {report.worst_min_singular_value:.4f} at t = {report.worst_t_s:.3f} s")
        lines.append(f"  min leader edge  {report.min_leader_edge_m:.3f} m")
    lines.append(f"  samples          {len(report.samples)} ({report.failed_samples} failing)")
    lines.append(f"  result           {'PASS' if report.passed else 'FAIL'}")
    for g in report.guarantees:
        lines.append(f"    - {g}")
    return "\n".join(lines)
