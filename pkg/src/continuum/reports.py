"""File writers for run artifacts. Column contracts are documented in docs/USAGE.md."""
import csv
import json
import logging
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from .monitor import ConstraintEvaluation
from .netsim import DeliveryRecord
from .simulation import SimTrace

logger = logging.getLogger(__name__)


def write_csv(path: Path, headers: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(headers)
        writer.writerows(rows)
    logger.info("wrote %s", path)
    return path


def _f(x) -> str:
    return repr(float(x))


def trace_rows(trace: SimTrace, decimation: int = 1):
    headers = ["tick", "t_s", "phase"]
    for a in trace.agents:
        headers += [
            f"{a}_x_m", f"{a}_y_m", f"{a}_vx_mps", f"{a}_vy_mps",
            f"{a}_setpoint_x_m", f"{a}_setpoint_y_m",
            f"{a}_local_x_m", f"{a}_local_y_m",
            f"{a}_global_x_m", f"{a}_global_y_m",
            f"{a}_controller_ran", f"{a}_messages",
        ]
    rows = []
    for i in range(0, len(trace), decimation):
        row = [int(trace.ticks[i]), _f(trace.t[i]), int(trace.phase[i])]
        for k in range(len(trace.agents)):
            p, v = trace.positions[i, k], trace.velocities[i, k]
            sp, lo, gl = trace.setpoints[i, k], trace.local_desired[i, k], trace.global_desired[i, k]
            row += [_f(p[0]), _f(p[1]), _f(v[0]), _f(v[1]), _f(sp[0]), _f(sp[1]),
                    _f(lo[0]), _f(lo[1]), _f(gl[0]), _f(gl[1]),
                    int(trace.controller_ran[i, k]), int(trace.rx_count[i, k])]
        rows.append(row)
    return headers, rows


def write_trace_csv(path: Path, trace: SimTrace, decimation: int = 1) -> Path:
    headers, rows = trace_rows(trace, decimation)
    return write_csv(path, headers, rows)


def report_indices(trace: SimTrace, rate_hz: float) -> np.ndarray:
    """First control sample at or after every 1/rate_hz instant."""
    step = trace.clock.hz / rate_hz
    targets = np.round(np.arange(0, trace.ticks[-1] + 1, step)).astype(np.int64)
    idx = np.searchsorted(trace.ticks, trace.ticks[0] + targets)
    return np.unique(idx[idx < len(trace)])


def write_constraint_csv(path: Path, evaluation: ConstraintEvaluation, trace: SimTrace,
                         epsilon: float, delta: float, rate_hz: float = 60.0) -> Path:
    """Panels A (boundary distance), B (nearest neighbor), C (local deviation),
    D (global deviation), each with its threshold columns."""
    agents = evaluation.agents
    headers = ["t_s"]
    headers += [f"boundary_{a}_m" for a in agents] + ["epsilon_m", "minus_delta_m"]
    headers += [f"nearest_{a}_m" for a in agents] + ["two_epsilon_m"]
    headers += [f"local_dev_{a}_m" for a in agents] + ["delta_m"]
    headers += [f"global_dev_{a}_m" for a in agents]
    rows = []
    for i in report_indices(trace, rate_hz):
        row = [_f(evaluation.t[i])]
        row += [_f(x) for x in evaluation.boundary[i]] + [_f(epsilon), _f(-delta)]
        row += [_f(x) for x in evaluation.nearest[i]] + [_f(2.0 * epsilon)]
        row += [_f(x) for x in evaluation.local_deviation[i]] + [_f(delta)]
        row += [_f(x) for x in evaluation.global_deviation[i]]
        rows.append(row)
    return write_csv(path, headers, rows)


def write_delivery_csv(path: Path, records: Sequence[DeliveryRecord]) -> Path:
    rows = [
        [_f(r.send_time), "" if r.deliver_time is None else _f(r.deliver_time),
         r.destination, r.seq, int(r.dropped)]
        for r in records
    ]
    return write_csv(path, ["send_time", "deliver_time", "destination", "seq", "dropped"], rows)


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text.rstrip("\n") + "\n", encoding="utf-8")
    return path


def write_summary(path: Path, summary: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    return path


def list_outputs(out_dir: Path) -> List[str]:
    return sorted(p.name for p in out_dir.iterdir() if p.is_file())
