from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.continuum.errors import EmptyTrace, MisalignedTrace
from src.continuum.formation import HomogeneousTransform
from src.continuum.guidance import Leg
from src.continuum.monitor import (
    CONSTRAINTS,
    ErrorStatistics,
    anomaly_screen,
    error_statistics,
    evaluate_constraints,
    nearest_neighbor_distances,
    signed_boundary_distances,
    statistics_table,
    theorem_counterexamples,
)
from src.continuum.safety import certify_plan, signed_boundary_distance

HZ = 60


def hover_trace(spec, seconds=2.0, offsets=None, ran=None):
    """Every agent parked at its initial position; offsets: {agent: (dx, dy)} from sample 0."""
    n = int(seconds * HZ)
    agents = spec.agents
    home = np.array([spec.initial_positions[a] for a in agents])
    positions = np.repeat(home[None], n, axis=0)
    for a, off in (offsets or {}).items():
        positions[:, agents.index(a)] += np.asarray(off)
    return SimpleNamespace(
        agents=agents,
        control_hz=HZ,
        t=np.arange(n) / HZ,
        phase=np.zeros(n, dtype=int),
        positions=positions,
        local_desired=np.repeat(home[None], n, axis=0),
        global_desired=np.repeat(home[None], n, axis=0),
        transforms=[HomogeneousTransform.identity()] * n,
        legs=(Leg("hold", "hover", 0.0, seconds, 0),),
        controller_ran=np.ones((n, len(agents)), dtype=bool) if ran is None else ran,
    )


def test_hovering_team_satisfies_everything(paper_spec):
    ev = evaluate_constraints(hover_trace(paper_spec), paper_spec)
    report = ev.report
    assert report.passed
    assert tuple(report.checks) == CONSTRAINTS
    assert report.checks["containment"].worst_value == pytest.approx(0.8638, abs=1e-3)
    assert report.checks["collision"].worst_value == pytest.approx(1.7277, abs=1e-3)
    assert report.checks["global_deviation"].worst_value == 0.0
    assert [leg.label for leg in report.legs] == ["hold"]
    assert "overall PASS" in report.pretty_message


def test_deviation_inside_delta_keeps_containment(paper_spec):
    # follower 4 pushed 0.35 m toward the leaders' base edge
    ev = evaluate_constraints(hover_trace(paper_spec, offsets={"4": (0.0, -0.35)}), paper_spec)
    checks = ev.report.checks
    assert checks["global_deviation"].passed
    assert checks["containment"].passed
    assert checks["containment"].worst_agent == "4"
    assert checks["containment"].worst_value == pytest.approx(0.8638 - 0.35, abs=1e-3)


def test_large_deviation_breaks_containment(paper_spec):
    ev = evaluate_constraints(hover_trace(paper_spec, offsets={"4": (0.0, -0.7)}), paper_spec)
    checks = ev.report.checks
    assert not ev.report.passed
    assert not checks["global_deviation"].passed
    assert not checks["containment"].passed
    assert checks["containment"].violating_samples == int(np.sum(ev.mask))
    assert not ev.report.legs[0].containment_passed


def test_warmup_excludes_early_samples(paper_spec):
    trace = hover_trace(paper_spec)
    trace.positions[:30, 3] += np.array([0.0, -0.7])
    assert evaluate_constraints(trace, paper_spec, warmup_s=0.6).report.passed
    assert not evaluate_constraints(trace, paper_spec, warmup_s=0.2).report.passed


def test_sample_view(paper_spec):
    ev = evaluate_constraints(hover_trace(paper_spec), paper_spec)
    s = ev.sample(70)
    assert s.t == pytest.approx(70 / HZ)
    assert set(s.boundary_distance) == set(paper_spec.agents)
    assert s.global_deviation["5"] == 0.0


def test_misaligned_and_empty_traces(paper_spec):
    trace = hover_trace(paper_spec)
    with pytest.raises(MisalignedTrace):
        evaluate_constraints(trace, paper_spec, transforms=trace.transforms[:-1])
    with pytest.raises(EmptyTrace):
        evaluate_constraints(trace, paper_spec, warmup_s=10.0)


def test_batched_geometry():
    tri = np.array([[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]])
    pts = np.array([[[0.5, 0.5], [1.0, -1.0]]])
    assert signed_boundary_distances(pts, tri) == pytest.approx(np.array([[0.5, -1.0]]))
    assert signed_boundary_distances(pts, tri[:, ::-1]) == pytest.approx(np.array([[0.5, -1.0]]))
    nn = nearest_neighbor_distances(np.array([[[0.0, 0.0], [3.0, 0.0], [0.0, 1.0]]]))
    assert nn == pytest.approx(np.array([[1.0, 3.0, 1.0]]))


def test_anomaly_screen_reports_long_stalls(paper_spec):
    n = 2 * HZ
    ran = np.ones((n, 5), dtype=bool)
    ran[30:40, 3] = False   # 10 ticks, 0.167 s
    ran[80:82, 0] = False   # 2 ticks, below threshold
    stalls = anomaly_screen(hover_trace(paper_spec, ran=ran), stall_threshold_s=0.1)
    assert len(stalls) == 1
    s = stalls[0]
    assert s.agent == "4"
    assert s.start_s == pytest.approx(0.5)
    assert s.duration_s == pytest.approx(10 / HZ)


def test_error_statistics_population_std(paper_spec):
    trace = hover_trace(paper_spec, offsets={"4": (0.03, 0.04)})
    report = error_statistics(trace, "global", warmup_s=0.0)
    assert report.per_agent["4"].mean == pytest.approx(0.05)
    assert report.per_agent["4"].std_dev == pytest.approx(0.0, abs=1e-12)
    assert report.per_agent["1"].max == 0.0
    assert report.pooled.mean == pytest.approx(0.01)
    assert report.pooled.count == 5 * len(trace.t)
    s = ErrorStatistics.of(np.array([1.0, 3.0]))
    assert s.std_dev == pytest.approx(1.0)


def test_error_statistics_excludes_stalls(paper_spec):
    trace = hover_trace(paper_spec)
    trace.positions[30:40, 3] += np.array([0.2, 0.0])
    ran = np.ones((len(trace.t), 5), dtype=bool)
    ran[30:40, 3] = False
    trace.controller_ran = ran
    stalls = anomaly_screen(trace)
    report = error_statistics(trace, "local", warmup_s=0.0, exclude=stalls)
    assert report.per_agent["4"].max == 0.0
    assert report.per_agent["4"].count == len(trace.t) - 10


def test_theorem_counterexamples_empty_for_valid_flight(paper_spec):
    trace = hover_trace(paper_spec, offsets={"5": (0.2, 0.1)})
    ev = evaluate_constraints(trace, paper_spec)
    cert = certify_plan(paper_spec, [(0.0, HomogeneousTransform.identity())])
    assert theorem_counterexamples(ev, paper_spec, cert) == []


def test_statistics_table_in_centimeters():
    table = statistics_table([("Agent 4", ErrorStatistics(mean=0.1, std_dev=0.02, max=0.25, count=3))], "Global")
    lines = table.splitlines()
    assert lines[0] == "Global"
    assert "Mean (cm)" in lines[1]
    assert lines[2].split() == ["Agent", "4", "10.00", "2.00", "25.00"]


def _oracle(p, tri):
    best = np.inf
    for k in range(3):
        a, b = tri[k], tri[(k + 1) % 3]
        s = np.clip(np.dot(p - a, b - a) / np.dot(b - a, b - a), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(p - (a + s * (b - a)))))
    m = np.array([[tri[0][0], tri[1][0], tri[2][0]], [tri[0][1], tri[1][1], tri[2][1]], [1.0, 1.0, 1.0]])
    bary = np.linalg.solve(m, np.array([p[0], p[1], 1.0]))
    return best if bary.min() >= 0.0 else -best


def test_signed_distance_matches_brute_force():
    rng = np.random.default_rng(2024)
    tri = np.array([[-2.0, -1.0], [2.5, -0.5], [0.3, 2.8]])
    pts = rng.uniform(-4.0, 4.0, size=(1000, 2))
    batched = signed_boundary_distances(pts[None], tri[None])[0]
    for p, got in zip(pts, batched):
        want = _oracle(p, tri)
        assert got == pytest.approx(want, abs=1e-9)
        assert signed_boundary_distance(p, tri) == pytest.approx(want, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 2.0), min_size=2, max_size=50), st.randoms())
def test_statistics_permutation_and_unit_invariance(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a = ErrorStatistics.of(np.array(values))
    b = ErrorStatistics.of(np.array(shuffled))
    cm = ErrorStatistics.of(np.array(values) * 100.0)
    assert b.mean == pytest.approx(a.mean, abs=1e-12)
    assert b.std_dev == pytest.approx(a.std_dev, abs=1e-9)
    assert b.max == a.max
    assert cm.mean == pytest.approx(100.0 * a.mean, rel=1e-9, abs=1e-9)
    assert cm.std_dev == pytest.approx(100.0 * a.std_dev, rel=1e-9, abs=1e-7)
