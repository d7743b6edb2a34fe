"""Continuum-deformation core: homogeneous transformations, leader inversion,
barycentric communication weights and follower desired positions.

Everything here is a pure function over immutable values.
"""
import logging
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Dict, Iterable, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    CollinearLeaders,
    CollinearNeighbors,
    DegenerateTransform,
    InvalidFormation,
)

logger = logging.getLogger(__name__)

# Triangles with a smaller area (m^2) are treated as degenerate.
COLLINEAR_AREA = 1e-9
WEIGHT_TOL = 1e-9

# Communication weights of the five-agent flights.
PAPER_WEIGHTS = (0.5, 0.134, 0.366)


class Vec2(NamedTuple):
    x: float
    y: float

    @classmethod
    def of(cls, x: float, y: float) -> "Vec2":
        x, y = float(x), float(y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"Vec2 components must be finite, got ({x}, {y})")
        return cls(x, y)

    @classmethod
    def zero(cls) -> "Vec2":
        return cls(0.0, 0.0)

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other[0], self.y + other[1])

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other[0], self.y - other[1])

    def __mul__(self, k: float) -> "Vec2":
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def __truediv__(self, k: float) -> "Vec2":
        return Vec2(self.x / k, self.y / k)

    def __neg__(self) -> "Vec2":
        return Vec2(-self.x, -self.y)

    def dot(self, other: "Vec2") -> float:
        return self.x * other[0] + self.y * other[1]

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True, eq=False)
class HomogeneousTransform:
    """r -> Q r + d with det(Q) > 0. `q` is stored as a read-only 2x2 array."""

    q: np.ndarray
    d: Vec2

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(2, 2)
        if not np.all(np.isfinite(q)):
            raise DegenerateTransform("Jacobian has non-finite entries")
        det = q[0, 0] * q[1, 1] - q[0, 1] * q[1, 0]
        if det <= 0.0:
            raise DegenerateTransform(f"Jacobian must preserve orientation (det(Q) = {det:.3e})")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "d", Vec2.of(*self.d))
        object.__setattr__(self, "_coeffs", (q[0, 0], q[0, 1], q[1, 0], q[1, 1]))

    @classmethod
    def identity(cls) -> "HomogeneousTransform":
        return cls(np.eye(2), Vec2.zero())

    @property
    def determinant(self) -> float:
        a, b, c, d = self._coeffs
        return float(a * d - b * c)

    def apply(self, r0: Sequence[float]) -> Vec2:
        a, b, c, d = self._coeffs
        x, y = r0
        return Vec2(float(a * x + b * y + self.d.x), float(c * x + d * y + self.d.y))


def triangle_area(a: Sequence[float], b: Sequence[float], c: Sequence[float]) -> float:
    """Signed area, positive for counter-clockwise vertices."""
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))


def equilateral_triangle(edge: float, centroid: Sequence[float] = (0.0, 0.0),
                         rotation_deg: float = 0.0) -> Tuple[Vec2, Vec2, Vec2]:
    """Bottom-left, bottom-right and apex vertices (counter-clockwise)."""
    radius = edge / math.sqrt(3.0)
    cx, cy = centroid
    out = []
    for angle in (210.0, 330.0, 90.0):
        a = math.radians(angle + rotation_deg)
        out.append(Vec2(cx + radius * math.cos(a), cy + radius * math.sin(a)))
    return tuple(out)


def transform_from_leaders(initial: Sequence[Vec2], current: Sequence[Vec2]) -> HomogeneousTransform:
    """Solve [P0 | 1] [Q^T; d^T] = P_HT for the transform acquired by the leaders."""
    if len(initial) != 3 or len(current) != 3:
        raise CollinearLeaders("exactly three leader positions are required")
    if abs(triangle_area(*initial)) < COLLINEAR_AREA:
        raise CollinearLeaders(f"initial leader positions are collinear: {list(initial)}")
    a = np.array([[p[0], p[1], 1.0] for p in initial], dtype=float)
    rhs = np.array([[p[0], p[1]] for p in current], dtype=float)
    sol = np.linalg.solve(a, rhs)
    q = sol[:2].T
    if triangle_area(*current) * triangle_area(*initial) <= 0.0 or abs(triangle_area(*current)) < COLLINEAR_AREA:
        raise DegenerateTransform(f"leader triangle collapsed or reflected: {list(current)}")
    return HomogeneousTransform(q, Vec2(sol[2, 0], sol[2, 1]))


def apply_transform(t: HomogeneousTransform, r0: Vec2) -> Vec2:
    return t.apply(r0)


def communication_weights(neighbor_initial: Sequence[Vec2], follower_initial: Vec2) -> Tuple[float, float, float]:
    """Barycentric coordinates of the follower in its in-neighbor triangle."""
    if len(neighbor_initial) != 3:
        raise CollinearNeighbors("a follower needs exactly three in-neighbors")
    if abs(triangle_area(*neighbor_initial)) < COLLINEAR_AREA:
        raise CollinearNeighbors(f"in-neighbor positions are collinear: {list(neighbor_initial)}")
    m = np.array([
        [p[0] for p in neighbor_initial],
        [p[1] for p in neighbor_initial],
        [1.0, 1.0, 1.0],
    ])
    w = np.linalg.solve(m, np.array([follower_initial[0], follower_initial[1], 1.0]))
    weights = tuple(float(v) for v in w)
    if any(not (0.0 < v < 1.0) for v in weights):
        logger.warning("follower at %s starts outside its neighbor triangle (weights %s)",
                       tuple(follower_initial), weights)
    return weights


def local_desired_position(weights: Sequence[float], neighbor_positions: Sequence[Vec2]) -> Vec2:
    x = y = 0.0
    for w, r in zip(weights, neighbor_positions):
        x += w * r[0]
        y += w * r[1]
    return Vec2(x, y)


@dataclass(frozen=True, eq=False)
class FormationSpec:
    leaders: Tuple[str, ...]
    followers: Tuple[str, ...]
    initial_positions: Mapping[str, Vec2]
    topology: Mapping[str, Tuple[str, str, str]]
    weights: Mapping[str, Tuple[float, float, float]]
    epsilon: float
    delta: float
    _leader_weights: Mapping[str, Tuple[float, float, float]] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "leaders", tuple(self.leaders))
        object.__setattr__(self, "followers", tuple(self.followers))
        object.__setattr__(self, "initial_positions", MappingProxyType(
            {k: Vec2.of(*v) for k, v in self.initial_positions.items()}))
        object.__setattr__(self, "topology", MappingProxyType(
            {k: tuple(v) for k, v in self.topology.items()}))
        object.__setattr__(self, "weights", MappingProxyType(
            {k: tuple(float(x) for x in v) for k, v in self.weights.items()}))
        self._validate()
        lead = self.leader_initial
        object.__setattr__(self, "_leader_weights", MappingProxyType({
            f: _barycentric(lead, self.initial_positions[f]) for f in self.followers
        }))

    def _validate(self) -> None:
        if len(self.leaders) != 3:
            raise InvalidFormation(f"exactly 3 leaders required, got {len(self.leaders)}")
        agents = self.agents
        if len(set(agents)) != len(agents):
            raise InvalidFormation(f"duplicate agent ids in {agents}")
        if set(self.initial_positions) != set(agents):
            raise InvalidFormation("initial_positions must list every agent exactly once")
        if not (self.epsilon > 0.0 and self.delta > 0.0):
            raise InvalidFormation(f"epsilon and delta must be positive (got {self.epsilon}, {self.delta})")
        if abs(triangle_area(*self.leader_initial)) < COLLINEAR_AREA:
            raise CollinearLeaders(f"leader initial positions are collinear: {self.leader_initial}")
        for f in self.followers:
            nbrs = self.topology.get(f)
            if nbrs is None or len(nbrs) != 3 or len(set(nbrs)) != 3:
                raise InvalidFormation(f"follower {f} needs exactly three distinct in-neighbors")
            if f in nbrs or any(n not in self.initial_positions for n in nbrs):
                raise InvalidFormation(f"follower {f} has invalid in-neighbors {nbrs}")
            w = self.weights.get(f)
            if w is None or len(w) != 3:
                raise InvalidFormation(f"follower {f} needs a weight triple")
            if abs(sum(w) - 1.0) > WEIGHT_TOL:
                raise InvalidFormation(f"weights of follower {f} sum to {sum(w)!r}, not 1")
            rebuilt = local_desired_position(w, [self.initial_positions[n] for n in nbrs])
            if (rebuilt - self.initial_positions[f]).norm() > WEIGHT_TOL:
                raise InvalidFormation(f"weights of follower {f} do not reproduce its initial position")
        extra = (set(self.topology) | set(self.weights)) - set(self.followers)
        if extra:
            raise InvalidFormation(f"topology/weights given for non-followers: {sorted(extra)}")

    @property
    def agents(self) -> Tuple[str, ...]:
        return self.leaders + self.followers

    @property
    def leader_initial(self) -> Tuple[Vec2, Vec2, Vec2]:
        return tuple(self.initial_positions[i] for i in self.leaders)


def _barycentric(triangle: Sequence[Vec2], point: Vec2) -> Tuple[float, float, float]:
    m = np.array([[p[0] for p in triangle], [p[1] for p in triangle], [1.0, 1.0, 1.0]])
    return tuple(float(v) for v in np.linalg.solve(m, np.array([point[0], point[1], 1.0])))


def leader_weights(spec: FormationSpec, follower: str) -> Tuple[float, float, float]:
    """Barycentric coordinates of a follower in the leading triangle."""
    return spec._leader_weights[follower]


def global_desired_positions(spec: FormationSpec, t: HomogeneousTransform) -> Dict[str, Vec2]:
    return {agent: t.apply(spec.initial_positions[agent]) for agent in spec.agents}


def derive_follower_positions(leader_positions: Mapping[str, Vec2],
                              followers: Sequence[str],
                              topology: Mapping[str, Sequence[str]],
                              weights: Mapping[str, Sequence[float]]) -> Dict[str, Vec2]:
    """Solve r_i - sum_{j in F} w_ij r_j = sum_{j in L} w_ij r_j for all followers at once."""
    index = {f: k for k, f in enumerate(followers)}
    n = len(followers)
    a = np.eye(n)
    b = np.zeros((n, 2))
    for f in followers:
        row = index[f]
        for nbr, w in zip(topology[f], weights[f]):
            if nbr in index:
                a[row, index[nbr]] -= w
            elif nbr in leader_positions:
                b[row] += w * np.asarray(leader_positions[nbr], dtype=float)
            else:
                raise InvalidFormation(f"follower {f} lists unknown in-neighbor {nbr}")
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise InvalidFormation("weights do not determine follower positions uniquely") from exc
    return {f: Vec2(float(sol[index[f], 0]), float(sol[index[f], 1])) for f in followers}


def build_formation(leaders: Sequence[str],
                    leader_positions: Mapping[str, Sequence[float]],
                    followers: Sequence[str],
                    topology: Mapping[str, Sequence[str]],
                    epsilon: float,
                    delta: float,
                    follower_positions: Optional[Mapping[str, Sequence[float]]] = None,
                    weights: Optional[Mapping[str, Sequence[float]]] = None) -> FormationSpec:
    """Either follower positions (weights derived) or weights (positions derived) must be given."""
    if (follower_positions is None) == (weights is None):
        raise InvalidFormation("give exactly one of follower_positions or weights")
    lead = {k: Vec2.of(*leader_positions[k]) for k in leaders}
    if weights is None:
        positions = dict(lead)
        positions.update({k: Vec2.of(*v) for k, v in follower_positions.items()})
        for f in followers:
            nbrs = tuple(topology.get(f, ()))
            if len(nbrs) != 3 or len(set(nbrs)) != 3:
                raise InvalidFormation(f"follower {f} needs exactly three distinct in-neighbors")
            if f in nbrs or any(n not in positions for n in nbrs):
                raise InvalidFormation(f"follower {f} has invalid in-neighbors {nbrs}")
        weights = {
            f: communication_weights([positions[n] for n in topology[f]], positions[f])
            for f in followers
        }
    else:
        positions = dict(lead)
        positions.update(derive_follower_positions(lead, followers, topology, weights))
    return FormationSpec(
        leaders=tuple(leaders),
        followers=tuple(followers),
        initial_positions=positions,
        topology={f: tuple(topology[f]) for f in followers},
        weights={f: tuple(weights[f]) for f in followers},
        epsilon=epsilon,
        delta=delta,
    )


def paper_formation(epsilon: float = 0.28, delta: float = 0.40, edge: float = 4.72,
                    centroid: Sequence[float] = (0.0, 0.0)) -> FormationSpec:
    """Five-agent team: leaders 1, 2, 3 on an equilateral triangle, followers 4 and 5."""
    v1, v2, v3 = equilateral_triangle(edge, centroid)
    return build_formation(
        leaders=("1", "2", "3"),
        leader_positions={"1": v1, "2": v2, "3": v3},
        followers=("4", "5"),
        topology={"4": ("1", "3", "5"), "5": ("2", "3", "4")},
        epsilon=epsilon,
        delta=delta,
        weights={"4": PAPER_WEIGHTS, "5": PAPER_WEIGHTS},
    )


def pairwise_min_distance(points: Iterable[Vec2]) -> float:
    pts = list(points)
    best = math.inf
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            best = min(best, (pts[i] - pts[j]).norm())
    return best
