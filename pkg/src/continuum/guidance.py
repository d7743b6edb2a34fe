"""Leader guidance: quintic spline legs, mission pose sequences and the
transform sequence they induce."""
import bisect
import logging
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateDuration, GuidanceError, TimeOutOfRange
from .formation import FormationSpec, HomogeneousTransform, Vec2, transform_from_leaders

logger = logging.getLogger(__name__)

TIME_TOL = 1e-9
DEFAULT_SEGMENT_S = 3.75

# Midpoint-velocity variant: net displacement per unit of v_max * T.
MIDPOINT_DISPLACEMENT_RATIO = 8.0 / 15.0

LegKind = Literal["hover", "contraction", "translation", "expansion"]
Variant = Literal["rest_to_rest", "midpoint_velocity"]

# +X, +Y, -X, -Y in centroid translation
SQUARE_HEADINGS = (0.0, 90.0, 180.0, 270.0)


@dataclass(frozen=True)
class SplineSegment:
    """r(s) = a + b s + c s^2 + d s^3 + e s^4 + f s^5 with s = t - t0."""

    coeffs: Tuple[Vec2, Vec2, Vec2, Vec2, Vec2, Vec2]
    t0: float
    tf: float

    def __post_init__(self):
        if not self.tf > self.t0:
            raise DegenerateDuration(f"segment needs tf > t0 (t0={self.t0}, tf={self.tf})")

    @property
    def duration(self) -> float:
        return self.tf - self.t0

    def position(self, t: float) -> Vec2:
        s = t - self.t0
        a, b, c, d, e, f = self.coeffs
        return a + s * (b + s * (c + s * (d + s * (e + s * f))))

    def velocity(self, t: float) -> Vec2:
        s = t - self.t0
        _, b, c, d, e, f = self.coeffs
        return b + s * (2.0 * c + s * (3.0 * d + s * (4.0 * e + s * (5.0 * f))))

    def acceleration(self, t: float) -> Vec2:
        s = t - self.t0
        _, _, c, d, e, f = self.coeffs
        return 2.0 * c + s * (6.0 * d + s * (12.0 * e + s * (20.0 * f)))


def _check_times(t0: float, tf: float) -> float:
    if not (math.isfinite(t0) and math.isfinite(tf)) or tf <= t0:
        raise DegenerateDuration(f"segment needs tf > t0 (t0={t0}, tf={tf})")
    return tf - t0


def quintic_segment(r0: Vec2, v0: Vec2, a0: Vec2, rf: Vec2, vf: Vec2, af: Vec2,
                    t0: float, tf: float) -> SplineSegment:
    """General boundary-value quintic: the start conditions fix a, b, c and a
    3x3 solve gives d, e, f."""
    T = _check_times(t0, tf)
    r0, v0, a0, rf, vf, af = (Vec2.of(*v) for v in (r0, v0, a0, rf, vf, af))
    A = np.array([
        [T ** 3, T ** 4, T ** 5],
        [3 * T ** 2, 4 * T ** 3, 5 * T ** 4],
        [6 * T, 12 * T ** 2, 20 * T ** 3],
    ])
    b = np.array([
        rf - (r0 + v0 * T + a0 * (0.5 * T * T)),
        vf - (v0 + a0 * T),
        af - a0,
    ])
    x = np.linalg.solve(A, b)
    d, e, f = (Vec2(float(row[0]), float(row[1])) for row in x)
    return SplineSegment((r0, v0, a0 * 0.5, d, e, f), t0, tf)


def rest_to_rest_segment(r0: Vec2, rf: Vec2, t0: float, tf: float) -> SplineSegment:
    """r(tau) = r0 + (rf - r0)(10 tau^3 - 15 tau^4 + 6 tau^5)."""
    T = _check_times(t0, tf)
    r0, rf = Vec2.of(*r0), Vec2.of(*rf)
    delta = rf - r0
    zero = Vec2.zero()
    return SplineSegment(
        (r0, zero, zero, delta * (10.0 / T ** 3), delta * (-15.0 / T ** 4), delta * (6.0 / T ** 5)),
        t0, tf,
    )


def midpoint_velocity_segment(r0: Vec2, direction: Vec2, v_max: float, t0: float, tf: float) -> SplineSegment:
    """Rest-to-rest leg whose speed at the midpoint is v_max along `direction`;
    the end position is left free."""
    T = _check_times(t0, tf)
    if v_max < 0.0 or not math.isfinite(v_max):
        raise GuidanceError(f"v_max must be a finite non-negative speed, got {v_max}")
    direction = Vec2.of(*direction)
    n = direction.norm()
    if v_max > 0.0 and n == 0.0:
        raise GuidanceError("direction must be non-zero")
    unit = direction / n if n > 0.0 else Vec2.zero()
    r0 = Vec2.of(*r0)
    return rest_to_rest_segment(r0, r0 + unit * (MIDPOINT_DISPLACEMENT_RATIO * v_max * T), t0, tf)


def leg_displacement(variant: Variant, edge_m: float, v_max: float, duration_s: float) -> float:
    if variant == "midpoint_velocity":
        return MIDPOINT_DISPLACEMENT_RATIO * v_max * duration_s
    return edge_m


@dataclass(frozen=True)
class Leg:
    label: str
    kind: LegKind
    t0: float
    tf: float
    phase: int
    heading_deg: Optional[float] = None


@dataclass(frozen=True)
class LeaderPlan:
    leaders: Tuple[str, ...]
    legs: Tuple[Leg, ...]
    segments: Mapping[str, Tuple[SplineSegment, ...]]
    poses: Tuple[Tuple[str, Tuple[Vec2, Vec2, Vec2]], ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", MappingProxyType({k: tuple(v) for k, v in self.segments.items()}))
        object.__setattr__(self, "_starts", [leg.t0 for leg in self.legs])
        for prev, nxt in zip(self.legs, self.legs[1:]):
            if abs(prev.tf - nxt.t0) > TIME_TOL:
                raise GuidanceError(f"legs {prev.label} and {nxt.label} are not time-contiguous")

    @property
    def t_start(self) -> float:
        return self.legs[0].t0

    @property
    def t_end(self) -> float:
        return self.legs[-1].tf

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def leg_index(self, t: float) -> int:
        if t < self.t_start - TIME_TOL or t > self.t_end + TIME_TOL:
            raise TimeOutOfRange(f"t = {t} outside the plan horizon [{self.t_start}, {self.t_end}]")
        return max(0, min(len(self.legs) - 1, bisect.bisect_right(self._starts, t) - 1))


def evaluate(plan: LeaderPlan, leader: str, t: float) -> Tuple[Vec2, Vec2, Vec2]:
    """(position, velocity, acceleration) of one leader at time t."""
    seg = plan.segments[leader][plan.leg_index(t)]
    return seg.position(t), seg.velocity(t), seg.acceleration(t)


def phase_at(plan: LeaderPlan, t: float) -> int:
    return plan.legs[plan.leg_index(t)].phase


def _scale_about_centroid(pose: Sequence[Vec2], scale: float) -> Tuple[Vec2, Vec2, Vec2]:
    c = (pose[0] + pose[1] + pose[2]) / 3.0
    return tuple(c + (p - c) * scale for p in pose)


def _shift(pose: Sequence[Vec2], offset: Vec2) -> Tuple[Vec2, Vec2, Vec2]:
    return tuple(p + offset for p in pose)


def _heading_vector(heading_deg: float) -> Vec2:
    # exact unit vectors for the square headings
    table = {0.0: Vec2(1.0, 0.0), 90.0: Vec2(0.0, 1.0), 180.0: Vec2(-1.0, 0.0), 270.0: Vec2(0.0, -1.0)}
    if heading_deg in table:
        return table[heading_deg]
    a = math.radians(heading_deg)
    return Vec2(math.cos(a), math.sin(a))


@dataclass
class _PlanBuilder:
    leaders: Tuple[str, ...]
    t: float = 0.0

    def __post_init__(self):
        self.legs: List[Leg] = []
        self.segments: Dict[str, List[SplineSegment]] = {k: [] for k in self.leaders}
        self.poses: List[Tuple[str, Tuple[Vec2, Vec2, Vec2]]] = []
        self.source_legs: List[str] = []

    def pose(self, label: str, pose: Tuple[Vec2, Vec2, Vec2]) -> None:
        self.poses.append((label, pose))

    def leg(self, label: str, kind: LegKind, start: Sequence[Vec2], end: Sequence[Vec2], duration: float,
            heading_deg: Optional[float] = None) -> None:
        t0, tf = self.t, self.t + duration
        for leader, r0, rf in zip(self.leaders, start, end):
            self.segments[leader].append(rest_to_rest_segment(r0, rf, t0, tf))
        self.legs.append(Leg(label, kind, t0, tf, len(self.legs), heading_deg))
        self.t = tf

    def build(self) -> LeaderPlan:
        if not self.legs:
            raise GuidanceError("a plan needs at least one leg")
        return LeaderPlan(self.leaders, tuple(self.legs), self.segments, tuple(self.poses))


def _add_leg(builder: _PlanBuilder, label: str, kind: LegKind, start, end, duration: float,
             heading_deg: Optional[float], waypoint: Optional[Tuple[int, float]]) -> None:
    """Add one leg, split at the intermediate waypoint when it targets this leg.
    Both halves keep the full leg duration."""
    if waypoint is not None and waypoint[0] == len(builder.source_legs):
        frac = waypoint[1]
        mid = tuple(a + (b - a) * frac for a, b in zip(start, end))
        builder.pose(f"{label} waypoint", mid)
        builder.leg(f"{label}a", kind, start, mid, duration, heading_deg)
        builder.leg(f"{label}b", kind, mid, end, duration, heading_deg)
    else:
        builder.leg(label, kind, start, end, duration, heading_deg)
    builder.source_legs.append(label)


def _mission(spec: FormationSpec, segment_duration: float, scale: float, square_edge: float,
             variant: Variant, v_max: float, intermediate_waypoint: Optional[Tuple[int, float]],
             hold_s: float, settle_s: float, with_deformation: bool) -> LeaderPlan:
    if segment_duration <= 0.0:
        raise DegenerateDuration(f"segment duration must be positive, got {segment_duration}")
    if intermediate_waypoint is not None and not (0.0 < intermediate_waypoint[1] < 1.0):
        raise GuidanceError(f"waypoint fraction must be in (0, 1), got {intermediate_waypoint[1]}")
    pose1 = spec.leader_initial
    builder = _PlanBuilder(spec.leaders)
    builder.pose("1", pose1)
    if hold_s > 0.0:
        builder.leg("hold", "hover", pose1, pose1, hold_s)

    pose2 = _scale_about_centroid(pose1, scale) if with_deformation else pose1
    if with_deformation:
        builder.pose("2", pose2)
        _add_leg(builder, "1-2", "contraction", pose1, pose2, segment_duration, None, intermediate_waypoint)

    step = leg_displacement(variant, square_edge, v_max, segment_duration)
    labels = ("2", "3", "4", "5", "2") if with_deformation else ("1", "3", "4", "5", "1")
    current = pose2
    for k, heading in enumerate(SQUARE_HEADINGS):
        if k == len(SQUARE_HEADINGS) - 1:
            nxt = pose2
        else:
            nxt = _shift(current, _heading_vector(heading) * step)
            builder.pose(labels[k + 1], nxt)
        _add_leg(builder, f"{labels[k]}-{labels[k + 1]}", "translation", current, nxt,
                 segment_duration, heading, intermediate_waypoint)
        current = nxt

    if with_deformation:
        _add_leg(builder, "2-1", "expansion", pose2, pose1, segment_duration, None, intermediate_waypoint)
    if settle_s > 0.0:
        builder.leg("settle", "hover", pose1, pose1, settle_s)
    plan = builder.build()
    logger.debug("built plan with %d legs over %.2f s", len(plan.legs), plan.duration)
    return plan


def paper_mission(spec: FormationSpec, segment_duration: float = DEFAULT_SEGMENT_S,
                  contraction: Optional[float] = None, square_edge: float = 1.0,
                  variant: Variant = "rest_to_rest", v_max: float = 0.5,
                  intermediate_waypoint: Optional[Tuple[int, float]] = None,
                  hold_s: float = 0.0, settle_s: float = 0.0) -> LeaderPlan:
    """Pose sequence 1-2-3-4-5-2-1: contraction, square in centroid translation, expansion.

    `contraction` defaults to the certified lambda_min; `intermediate_waypoint`
    is (mission leg index, fraction) and does not count hold/settle legs.
    """
    if contraction is None:
        from .safety import compute_margins
        contraction = compute_margins(spec).lambda_min
    if not contraction > 0.0:
        raise GuidanceError(f"contraction must be positive, got {contraction}")
    return _mission(spec, segment_duration, contraction, square_edge, variant, v_max,
                    intermediate_waypoint, hold_s, settle_s, with_deformation=True)


def square_mission(spec: FormationSpec, segment_duration: float = DEFAULT_SEGMENT_S,
                   square_edge: float = 1.0, variant: Variant = "rest_to_rest", v_max: float = 0.5,
                   intermediate_waypoint: Optional[Tuple[int, float]] = None,
                   hold_s: float = 0.0, settle_s: float = 0.0) -> LeaderPlan:
    """Translation-only square at the initial scale."""
    return _mission(spec, segment_duration, 1.0, square_edge, variant, v_max,
                    intermediate_waypoint, hold_s, settle_s, with_deformation=False)


def leader_desired(plan: LeaderPlan, t: float) -> Tuple[List[Vec2], List[Vec2]]:
    """Desired positions and velocities of all leaders, in plan leader order."""
    idx = plan.leg_index(t)
    pos, vel = [], []
    for leader in plan.leaders:
        seg = plan.segments[leader][idx]
        pos.append(seg.position(t))
        vel.append(seg.velocity(t))
    return pos, vel


def plan_to_transforms(spec: FormationSpec, plan: LeaderPlan,
                       sample_rate: float = 100.0) -> List[Tuple[float, HomogeneousTransform]]:
    """Transform acquired by the leaders at t = t_start + k / sample_rate."""
    if sample_rate <= 0.0:
        raise GuidanceError(f"sample rate must be positive, got {sample_rate}")
    n = int(math.floor(plan.duration * sample_rate + TIME_TOL))
    out = []
    initial = spec.leader_initial
    for k in range(n + 1):
        t = plan.t_start + k / sample_rate
        pos, _ = leader_desired(plan, min(t, plan.t_end))
        out.append((t, transform_from_leaders(initial, pos)))
    return out
