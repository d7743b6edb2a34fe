"""Constraint evaluation and error statistics over simulation traces."""
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from .errors import EmptyTrace, MisalignedTrace
from .formation import FormationSpec, HomogeneousTransform
from .safety import CertificateReport

if TYPE_CHECKING:
    from .simulation import SimTrace

logger = logging.getLogger(__name__)

TOL = 1e-9
CONSTRAINTS = ("containment", "bounding", "collision", "local_deviation", "global_deviation")


class ConstraintSample(BaseModel):
    t: float
    boundary_distance: Dict[str, float]
    nearest_neighbor: Dict[str, float]
    local_deviation: Dict[str, float]
    global_deviation: Dict[str, float]


class ConstraintCheck(BaseModel):
    name: str
    passed: bool
    threshold: float
    worst_value: float
    worst_t_s: float
    worst_agent: str
    violating_samples: int


class LegCheck(BaseModel):
    phase: int
    label: str
    kind: str
    heading_deg: Optional[float]
    global_deviation_passed: bool
    worst_global_deviation: float
    containment_passed: bool
    worst_boundary_distance: Optional[float]


class ConstraintReport(BaseModel):
    passed: bool
    warmup_s: float
    epsilon: float
    delta: float
    checks: Dict[str, ConstraintCheck]
    legs: List[LegCheck]
    pretty_message: str


@dataclass(frozen=True)
class ConstraintEvaluation:
    agents: Tuple[str, ...]
    t: np.ndarray
    mask: np.ndarray
    boundary: np.ndarray
    nearest: np.ndarray
    local_deviation: np.ndarray
    global_deviation: np.ndarray
    report: ConstraintReport

    def sample(self, i: int) -> ConstraintSample:
        def row(arr):
            return {a: float(v) for a, v in zip(self.agents, arr[i])}

        return ConstraintSample(
            t=float(self.t[i]),
            boundary_distance=row(self.boundary),
            nearest_neighbor=row(self.nearest),
            local_deviation=row(self.local_deviation),
            global_deviation=row(self.global_deviation),
        )


class ErrorStatistics(BaseModel):
    mean: float
    std_dev: float
    max: float
    count: int

    @classmethod
    def of(cls, values: np.ndarray) -> "ErrorStatistics":
        values = np.asarray(values, dtype=float)
        return cls(mean=float(values.mean()), std_dev=float(values.std()),
                   max=float(values.max()), count=int(values.size))


class ErrorReport(BaseModel):
    reference: str
    per_agent: Dict[str, ErrorStatistics]
    pooled: ErrorStatistics


class StallInterval(BaseModel):
    agent: str
    start_s: float
    end_s: float
    duration_s: float


def signed_boundary_distances(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Batched signed distance to the triangle boundary, positive inside.

    points: (N, K, 2); triangles: (N, 3, 2). Returns (N, K).
    """
    points = np.asarray(points, dtype=float)
    tri = np.asarray(triangles, dtype=float)
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    orient = np.sign(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])[:, None]
    dist = np.full(points.shape[:2], np.inf)
    inside = np.ones(points.shape[:2], dtype=bool)
    for k in range(3):
        a = tri[:, k][:, None, :]
        ab = tri[:, (k + 1) % 3][:, None, :] - a
        ap = points - a
        denom = np.maximum(np.sum(ab * ab, axis=-1), np.finfo(float).tiny)
        s = np.clip(np.sum(ap * ab, axis=-1) / denom, 0.0, 1.0)
        d = np.linalg.norm(ap - s[..., None] * ab, axis=-1)
        dist = np.minimum(dist, d)
        cross = ab[..., 0] * ap[..., 1] - ab[..., 1] * ap[..., 0]
        inside &= orient * cross >= 0.0
    return np.where(inside, dist, -dist)


def nearest_neighbor_distances(points: np.ndarray) -> np.ndarray:
    """(N, A, 2) -> (N, A) distance to the closest other agent."""
    diff = points[:, :, None, :] - points[:, None, :, :]
    d = np.linalg.norm(diff, axis=-1)
    a = points.shape[1]
    d[:, np.arange(a), np.arange(a)] = np.inf
    return d.min(axis=2)


def _leading_triangles(spec: FormationSpec, transforms: Sequence[HomogeneousTransform]) -> np.ndarray:
    lead = spec.leader_initial
    return np.array([[tr.apply(p) for p in lead] for tr in transforms], dtype=float)


def _check(name: str, values: np.ndarray, t: np.ndarray, agents: Sequence[str], threshold: float,
           upper: bool) -> ConstraintCheck:
    """values: (N, K) restricted to the evaluation window and the checked agents."""
    if upper:
        bad = values > threshold + TOL
        flat = int(np.argmax(values))
    else:
        bad = values < threshold - TOL
        flat = int(np.argmin(values))
    i, k = np.unravel_index(flat, values.shape)
    return ConstraintCheck(
        name=name,
        passed=not bool(bad.any()),
        threshold=threshold,
        worst_value=float(values[i, k]),
        worst_t_s=float(t[i]),
        worst_agent=agents[k],
        violating_samples=int(bad.any(axis=1).sum()),
    )


def evaluate_constraints(trace: "SimTrace", spec: FormationSpec,
                         transforms: Optional[Sequence[HomogeneousTransform]] = None,
                         warmup_s: float = 1.0) -> ConstraintEvaluation:
    """Containment (followers >= eps), bounding (all >= -delta), collision (>= 2 eps)
    and deviation (<= delta) checks over every sample after the warm-up."""
    transforms = list(trace.transforms if transforms is None else transforms)
    n = len(trace.t)
    if len(transforms) != n:
        raise MisalignedTrace(f"{len(transforms)} transforms for {n} trace samples")
    if tuple(trace.agents) != tuple(spec.agents):
        raise MisalignedTrace(f"trace agents {trace.agents} do not match formation agents {spec.agents}")
    if n == 0:
        raise EmptyTrace("trace has no samples")

    agents = tuple(spec.agents)
    t = np.asarray(trace.t, dtype=float)
    pos = trace.positions
    boundary = signed_boundary_distances(pos, _leading_triangles(spec, transforms))
    nearest = nearest_neighbor_distances(pos)
    local_dev = np.linalg.norm(pos - trace.local_desired, axis=-1)
    global_dev = np.linalg.norm(pos - trace.global_desired, axis=-1)
    mask = t >= t[0] + warmup_s - TOL
    if not mask.any():
        raise EmptyTrace(f"no samples after the {warmup_s} s warm-up")

    eps, delta = spec.epsilon, spec.delta
    fidx = [agents.index(f) for f in spec.followers]
    tm = t[mask]
    checks = {
        "bounding": _check("bounding", boundary[mask], tm, agents, -delta, upper=False),
        "collision": _check("collision", nearest[mask], tm, agents, 2.0 * eps, upper=False),
        "local_deviation": _check("local_deviation", local_dev[mask], tm, agents, delta, upper=True),
        "global_deviation": _check("global_deviation", global_dev[mask], tm, agents, delta, upper=True),
    }
    if fidx:
        checks["containment"] = _check("containment", boundary[mask][:, fidx], tm,
                                       [agents[k] for k in fidx], eps, upper=False)
    checks = {name: checks[name] for name in CONSTRAINTS if name in checks}

    legs = _leg_checks(trace, mask, boundary, global_dev, fidx, eps, delta)
    passed = all(c.passed for c in checks.values())
    report = ConstraintReport(passed=passed, warmup_s=warmup_s, epsilon=eps, delta=delta,
                              checks=checks, legs=legs, pretty_message="")
    report.pretty_message = render_constraints(report)
    for c in checks.values():
        if not c.passed:
            logger.info("constraint %s violated at %d samples (worst %.3f m, agent %s, t=%.2f s)",
                        c.name, c.violating_samples, c.worst_value, c.worst_agent, c.worst_t_s)
    return ConstraintEvaluation(agents, t, mask, boundary, nearest, local_dev, global_dev, report)


def _leg_checks(trace, mask, boundary, global_dev, fidx, eps, delta) -> List[LegCheck]:
    out = []
    phases = np.asarray(trace.phase)
    for leg in getattr(trace, "legs", ()):
        sel = mask & (phases == leg.phase)
        if not sel.any():
            continue
        worst_dev = float(global_dev[sel].max())
        worst_b = float(boundary[sel][:, fidx].min()) if fidx else None
        out.append(LegCheck(
            phase=leg.phase,
            label=leg.label,
            kind=leg.kind,
            heading_deg=leg.heading_deg,
            global_deviation_passed=worst_dev <= delta + TOL,
            worst_global_deviation=worst_dev,
            containment_passed=worst_b is None or worst_b >= eps - TOL,
            worst_boundary_distance=worst_b,
        ))
    return out


def render_constraints(report: ConstraintReport) -> str:
    lines = [f"Constraint report (warm-up {report.warmup_s:.2f} s, eps {report.epsilon:.2f} m, "
             f"delta {report.delta:.2f} m)"]
    for c in report.checks.values():
        lines.append(f"  {c.name:<17} {'pass' if c.passed else 'FAIL':<5} worst {c.worst_value * 100:8.2f} cm "
                     f"(limit {c.threshold * 100:7.2f} cm, agent {c.worst_agent}, t={c.worst_t_s:.2f} s, "
                     f"{c.violating_samples} samples)")
    if report.legs:
        lines.append("  per leg:")
        for leg in report.legs:
            heading = "-" if leg.heading_deg is None else f"{leg.heading_deg:.0f} deg"
            lines.append(f"    {leg.label:<10} {leg.kind:<12} {heading:>8}  global dev "
                         f"{leg.worst_global_deviation * 100:7.2f} cm {'pass' if leg.global_deviation_passed else 'FAIL'}")
    lines.append(f"  overall {'PASS' if report.passed else 'FAIL'}")
    return "\n".join(lines)


def anomaly_screen(trace: "SimTrace", stall_threshold_s: float = 0.1) -> List[StallInterval]:
    """Intervals where an agent's controller skipped consecutive ticks for at least the threshold."""
    ran = np.asarray(trace.controller_ran, dtype=bool)
    t = np.asarray(trace.t, dtype=float)
    step = 1.0 / trace.control_hz
    out: List[StallInterval] = []
    for k, agent in enumerate(trace.agents):
        skipped = ~ran[:, k]
        if not skipped.any():
            continue
        padded = np.concatenate(([False], skipped, [False])).astype(np.int8)
        edges = np.flatnonzero(np.diff(padded))
        for start, stop in zip(edges[::2], edges[1::2]):
            duration = (stop - start) * step
            if duration >= stall_threshold_s - TOL:
                out.append(StallInterval(agent=agent, start_s=float(t[start]),
                                         end_s=float(t[start]) + duration, duration_s=duration))
    if out:
        logger.warning("controller stalls detected: %s",
                       ", ".join(f"{s.agent}@{s.start_s:.2f}s/{s.duration_s:.3f}s" for s in out))
    return out


def error_statistics(trace: "SimTrace", reference: Literal["local", "global"] = "global",
                     warmup_s: float = 1.0, exclude: Sequence[StallInterval] = ()) -> ErrorReport:
    """Mean, population std and max of the deviation from the chosen reference."""
    if reference not in ("local", "global"):
        raise ValueError(f"reference must be 'local' or 'global', got {reference!r}")
    t = np.asarray(trace.t, dtype=float)
    if t.size == 0:
        raise EmptyTrace("trace has no samples")
    desired = trace.local_desired if reference == "local" else trace.global_desired
    dev = np.linalg.norm(trace.positions - desired, axis=-1)
    keep = np.repeat((t >= t[0] + warmup_s - TOL)[:, None], len(trace.agents), axis=1)
    for iv in exclude:
        k = list(trace.agents).index(iv.agent)
        keep[(t >= iv.start_s - TOL) & (t < iv.end_s - TOL), k] = False
    if not keep.any():
        raise EmptyTrace(f"no samples left after warm-up {warmup_s} s and exclusions")
    per_agent = {
        a: ErrorStatistics.of(dev[keep[:, k], k])
        for k, a in enumerate(trace.agents) if keep[:, k].any()
    }
    return ErrorReport(reference=reference, per_agent=per_agent, pooled=ErrorStatistics.of(dev[keep]))


def theorem_counterexamples(evaluation: ConstraintEvaluation, spec: FormationSpec,
                            certificate: CertificateReport) -> List[float]:
    """Sample times where the certificate passes and every global deviation is within
    delta, yet containment, bounding or collision fails. Expected to be empty."""
    if not certificate.passed:
        return []
    eps, delta = spec.epsilon, spec.delta
    fidx = [evaluation.agents.index(f) for f in spec.followers]
    premise = evaluation.mask & np.all(evaluation.global_deviation <= delta + TOL, axis=1)
    broken = np.any(evaluation.boundary < -delta - TOL, axis=1)
    broken |= np.any(evaluation.nearest < 2.0 * eps - TOL, axis=1)
    if fidx:
        broken |= np.any(evaluation.boundary[:, fidx] < eps - TOL, axis=1)
    hits = evaluation.t[premise & broken]
    if hits.size:
        logger.error("%d samples contradict the certified guarantees", hits.size)
    return [float(x) for x in hits]


def statistics_table(rows: Sequence[Tuple[str, ErrorStatistics]], title: str = "") -> str:
    """Centimeter table: label | Mean | Std. Dev | Max."""
    lines = [title] if title else []
    lines.append(f"{'':<12}{'Mean (cm)':>12}{'Std. Dev (cm)':>16}{'Max (cm)':>12}")
    for label, s in rows:
        lines.append(f"{label:<12}{s.mean * 100:>12.2f}{s.std_dev * 100:>16.2f}{s.max * 100:>12.2f}")
    return "\n".join(lines)
