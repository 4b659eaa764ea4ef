"""Performance index, CPU-time efficiency and scaling tables."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ReportError

CSV_FIELDS = ("run_id", "mode", "n_ranks", "n_elems_by_type", "N", "n_dof", "steps", "stages", "wall_s",
              "simulated_s", "pid_s", "efficiency", "imbalance_before", "imbalance_after", "n_rebalances")


@dataclass
class RunRecord:
    wall_clock_time: float
    n_ranks: int
    n_dof: int
    n_time_steps: int
    n_rk_stages: int
    simulated_time: float = 0.0
    run_id: str = ""
    mode: str = "single"
    n_elems_by_type: dict = field(default_factory=dict)
    N: int = 0
    imbalance_before: float = float("nan")
    imbalance_after: float = float("nan")
    n_rebalances: int = 0

    @property
    def cpu_hours(self) -> float:
        return self.n_ranks * self.wall_clock_time / 3600.0


def compute_pid(record: RunRecord) -> float:
    """Seconds per degree of freedom and Runge-Kutta stage, per rank."""
    denom = record.n_dof * record.n_time_steps * record.n_rk_stages
    if denom <= 0:
        raise DomainError(f"PID undefined: dof={record.n_dof}, steps={record.n_time_steps}, "
                          f"stages={record.n_rk_stages}")
    if record.wall_clock_time < 0 or record.n_ranks <= 0:
        raise DomainError("wall time must be >= 0 and ranks positive")
    return record.wall_clock_time * record.n_ranks / denom


def compute_efficiency(record: RunRecord) -> float:
    """Simulated seconds per CPU-hour."""
    if record.cpu_hours <= 0:
        raise DomainError("efficiency undefined for zero CPU time")
    return record.simulated_time / record.cpu_hours


@dataclass
class ScalingRow:
    n_ranks: int
    n_runs: int
    mean_pid: float
    mean_wall: float
    normalized: float   # speed-up in strong mode, efficiency in weak mode


def scaling_report(records, mode: str) -> list[ScalingRow]:
    """Average PIDs per rank count and normalise to the smallest count.

    Strong mode reports the speed-up ``(PID_0 / PID_n) * (n / n_0)``; weak
    mode reports the efficiency ``PID_0 / PID_n``.  The baseline row is 1.0
    by construction.
    """
    if mode not in ("strong", "weak"):
        raise ReportError(f"unknown scaling mode {mode!r}")
    groups = defaultdict(list)
    for rec in records:
        groups[int(rec.n_ranks)].append(rec)
    if len(groups) < 2:
        raise ReportError(f"scaling report needs at least two rank counts, got {sorted(groups)}")
    counts = sorted(groups)
    base = counts[0]
    if base != min(r.n_ranks for r in records) or not groups[base]:
        raise ReportError("missing baseline")
    pids = {n: float(np.mean([compute_pid(r) for r in groups[n]])) for n in counts}
    if pids[base] <= 0:
        raise ReportError("baseline PID is zero")
    rows = []
    for n in counts:
        if n == base:
            norm = 1.0
        elif pids[n] <= 0:
            raise ReportError(f"zero PID at {n} ranks")
        elif mode == "strong":
            norm = pids[base] / pids[n] * (n / base)
        else:
            norm = pids[base] / pids[n]
        rows.append(ScalingRow(n, len(groups[n]), pids[n],
                               float(np.mean([r.wall_clock_time for r in groups[n]])), norm))
    return rows


def record_row(rec: RunRecord) -> dict:
    eff = compute_efficiency(rec) if rec.cpu_hours > 0 else float("nan")
    return {
        "run_id": rec.run_id,
        "mode": rec.mode,
        "n_ranks": rec.n_ranks,
        "n_elems_by_type": ";".join(f"{k}={v}" for k, v in sorted(rec.n_elems_by_type.items())),
        "N": rec.N,
        "n_dof": rec.n_dof,
        "steps": rec.n_time_steps,
        "stages": rec.n_rk_stages,
        "wall_s": repr(float(rec.wall_clock_time)),
        "simulated_s": repr(float(rec.simulated_time)),
        "pid_s": repr(compute_pid(rec)),
        "efficiency": repr(eff),
        "imbalance_before": repr(float(rec.imbalance_before)),
        "imbalance_after": repr(float(rec.imbalance_after)),
        "n_rebalances": rec.n_rebalances,
    }


def write_metrics_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for rec in records:
            w.writerow(record_row(rec))


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_scaling_csv(path, rows, mode: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "n_ranks", "n_runs", "mean_pid_s", "mean_wall_s",
                    "speedup" if mode == "strong" else "efficiency"])
        for r in rows:
            w.writerow([mode, r.n_ranks, r.n_runs, repr(r.mean_pid), repr(r.mean_wall), repr(r.normalized)])
