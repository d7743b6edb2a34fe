"""Certify, run and sweep a scenario. Shared by the CLI and the HTTP service."""
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel

from . import config
from .errors import ScenarioError, UncertifiedPlan
from .formation import FormationSpec
from .guidance import LeaderPlan, plan_to_transforms
from .models import Scenario, dump_scenario, parse_scenario
from .monitor import (
    ConstraintReport,
    ErrorReport,
    ErrorStatistics,
    StallInterval,
    anomaly_screen,
    error_statistics,
    evaluate_constraints,
    statistics_table,
    theorem_counterexamples,
)
from .netsim import LinkStatistics, link_statistics
from .reports import (
    list_outputs,
    write_constraint_csv,
    write_csv,
    write_delivery_csv,
    write_summary,
    write_text,
    write_trace_csv,
)
from .safety import CertificateReport, certify_plan, compute_margins
from .simulation import SimTrace, simulate

logger = logging.getLogger(__name__)

SweepParam = Literal["v_max", "drop_probability", "delta"]


class RunSummary(BaseModel):
    scenario: str
    seed: int
    follower_mode: str
    out_dir: Optional[str]
    passed: bool
    certificate_passed: bool
    constraints_passed: bool
    checks: Dict[str, bool]
    statistics: Dict[str, ErrorReport]
    link: LinkStatistics
    stalls: List[StallInterval]
    theorem_counterexamples: int
    files: List[str] = []
    pretty_message: str


class RunResult:
    """In-memory artifacts of one run, for callers that want more than the summary."""

    def __init__(self, summary: RunSummary, trace: SimTrace, certificate: CertificateReport,
                 constraints: ConstraintReport):
        self.summary = summary
        self.trace = trace
        self.certificate = certificate
        self.constraints = constraints


def certify_scenario(scenario: Scenario) -> Tuple[FormationSpec, LeaderPlan, CertificateReport]:
    spec = scenario.formation_spec()
    margins = compute_margins(spec)
    plan = scenario.plan(spec)
    transforms = plan_to_transforms(spec, plan, scenario.monitor.certificate_rate_hz)
    return spec, plan, certify_plan(spec, transforms, margins)


def resolve_out_dir(scenario: Scenario, out: Optional[str] = None) -> Path:
    """--out, then CONTINUUM_OUTPUT_DIR, then the scenario's output_dir, then data/runs/<name>."""
    chosen = out or config.output_dir_override() or scenario.output_dir
    return Path(chosen) if chosen else config.default_run_dir(scenario.name)


def run_scenario(scenario: Scenario, out: Optional[str] = None, force: bool = False,
                 write: bool = True) -> RunResult:
    spec, plan, certificate = certify_scenario(scenario)
    if not certificate.passed and not force:
        raise UncertifiedPlan(
            f"plan for {scenario.name} fails certification at {certificate.failed_samples} samples; "
            "use --force to run anyway"
        )
    trace = simulate(scenario, spec, plan)
    mon = scenario.monitor
    evaluation = evaluate_constraints(trace, spec, warmup_s=mon.warmup_s)
    stalls = anomaly_screen(trace, mon.stall_threshold_s)
    stats = {
        ref: error_statistics(trace, ref, warmup_s=mon.warmup_s, exclude=stalls)
        for ref in ("local", "global")
    }
    links = link_statistics(trace.deliveries, trace.clock)
    counter = theorem_counterexamples(evaluation, spec, certificate)

    report = evaluation.report
    summary = RunSummary(
        scenario=scenario.name,
        seed=scenario.seed,
        follower_mode=scenario.follower_mode.value,
        out_dir=None,
        passed=certificate.passed and report.passed,
        certificate_passed=certificate.passed,
        constraints_passed=report.passed,
        checks={name: c.passed for name, c in report.checks.items()},
        statistics=stats,
        link=links,
        stalls=stalls,
        theorem_counterexamples=len(counter),
        pretty_message="",
    )
    tables = render_statistics(stats)
    summary.pretty_message = "\n\n".join([certificate.pretty_message, report.pretty_message, tables])

    if write:
        out_dir = resolve_out_dir(scenario, out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_trace_csv(out_dir / "trace.csv", trace, scenario.output.trace_decimation)
        write_constraint_csv(out_dir / "constraints.csv", evaluation, trace,
                             spec.epsilon, spec.delta, scenario.output.report_rate_hz)
        write_delivery_csv(out_dir / "deliveries.csv", trace.deliveries)
        write_text(out_dir / "certificate.txt", certificate.pretty_message)
        write_text(out_dir / "constraints.txt", report.pretty_message)
        write_text(out_dir / "statistics.txt", tables)
        write_text(out_dir / "scenario.json", dump_scenario(scenario))
        summary.out_dir = str(out_dir)
        summary.files = sorted(set(list_outputs(out_dir)) | {"summary.json"})
        write_summary(out_dir / "summary.json", summary.model_dump(mode="json", exclude={"pretty_message"}))
    logger.info("run %s finished: %s", scenario.name, "PASS" if summary.passed else "FAIL")
    return RunResult(summary, trace, certificate, report)


def render_statistics(stats: Dict[str, ErrorReport]) -> str:
    blocks = []
    for ref, rep in stats.items():
        rows = [(f"agent {a}", s) for a, s in rep.per_agent.items()] + [("pooled", rep.pooled)]
        blocks.append(statistics_table(rows, f"Deviation from {ref} desired position"))
    return "\n\n".join(blocks)


# -------- sweeps --------

class SweepRow(BaseModel):
    value: float
    global_deviation: ErrorStatistics
    local_deviation: ErrorStatistics
    constraints_passed: bool
    certificate_passed: bool


def apply_sweep_value(scenario: Scenario, param: SweepParam, value: float) -> Scenario:
    data = scenario.model_dump(mode="json")
    if param == "v_max":
        data["mission"]["variant"] = "midpoint_velocity"
        data["mission"]["v_max_mps"] = value
    elif param == "drop_probability":
        data["link"]["drop_probability"] = value
    elif param == "delta":
        data["formation"]["delta_m"] = value
    else:
        raise ScenarioError(f"unknown sweep parameter {param!r}")
    data["name"] = f"{scenario.name}_{param}_{value:g}"
    return parse_scenario(data)


def _sweep_one(payload: Tuple[str, str, float]) -> dict:
    text, param, value = payload
    scenario = apply_sweep_value(parse_scenario(text), param, value)
    result = run_scenario(scenario, force=True, write=False)
    s = result.summary
    return SweepRow(
        value=value,
        global_deviation=s.statistics["global"].pooled,
        local_deviation=s.statistics["local"].pooled,
        constraints_passed=s.constraints_passed,
        certificate_passed=s.certificate_passed,
    ).model_dump()


def sweep(scenario: Scenario, param: SweepParam, values: Sequence[float], jobs: int = 1) -> List[SweepRow]:
    if not values:
        raise ScenarioError("sweep needs at least one value")
    text = dump_scenario(scenario)
    payloads = [(text, param, float(v)) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_sweep_one, payloads))
    else:
        raw = [_sweep_one(p) for p in payloads]
    return [SweepRow.model_validate(r) for r in raw]


def sweep_table(param: str, rows: Sequence[SweepRow]) -> str:
    lines = [f"Global deviation vs {param}",
             f"{param:<18}{'Mean (cm)':>12}{'Std. Dev (cm)':>16}{'Max (cm)':>12}{'constraints':>14}"]
    for r in rows:
        g = r.global_deviation
        lines.append(f"{r.value:<18g}{g.mean * 100:>12.2f}{g.std_dev * 100:>16.2f}{g.max * 100:>12.2f}"
                     f"{'pass' if r.constraints_passed else 'FAIL':>14}")
    return "\n".join(lines)


def write_sweep_csv(path: Path, param: str, rows: Sequence[SweepRow]) -> Path:
    headers = [param, "global_mean_m", "global_std_m", "global_max_m",
               "local_mean_m", "local_std_m", "local_max_m", "constraints_passed", "certificate_passed"]
    body = [[repr(r.value), repr(r.global_deviation.mean), repr(r.global_deviation.std_dev),
             repr(r.global_deviation.max), repr(r.local_deviation.mean), repr(r.local_deviation.std_dev),
             repr(r.local_deviation.max), int(r.constraints_passed), int(r.certificate_passed)] for r in rows]
    return write_csv(path, headers, body)
