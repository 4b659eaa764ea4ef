"""Strong and weak scaling sweeps over simulated rank counts."""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigurationError
from ..metrics import RunRecord, ScalingRow, scaling_report, write_metrics_csv, write_scaling_csv
from .config import BenchConfig, validate
from .scenario import ScenarioResult, run_scenario, version_stamp

log = logging.getLogger(__name__)


@dataclass
class ScalingResult:
    mode: str
    rows: list[ScalingRow]
    records: list[RunRecord]
    results: list[ScenarioResult]


def config_for(base: BenchConfig, n_ranks: int, mode: str, base_ranks: int) -> BenchConfig:
    """Strong mode keeps the mesh; weak mode stretches it streamwise (x) with the rank count."""
    cfg = copy.deepcopy(base)
    cfg.n_ranks = n_ranks
    cfg.output_dir = None
    if mode == "weak":
        if n_ranks % base_ranks:
            raise ConfigurationError(f"weak scaling needs rank counts that are multiples of {base_ranks}")
        f = n_ranks // base_ranks
        nx, ny, nz = base.mesh.dims
        lx, ly, lz = base.mesh.length
        cfg.mesh.dims = (nx * f, ny, nz)
        cfg.mesh.length = (lx * f, ly, lz)
    validate(cfg)
    return cfg


def run_scaling(base: BenchConfig, rank_counts, mode: str = "strong", repetitions: int = 5,
                output_dir=None) -> ScalingResult:
    if mode not in ("strong", "weak"):
        raise ConfigurationError(f"unknown scaling mode {mode!r}")
    counts = sorted({int(n) for n in rank_counts})
    if len(counts) < 2 or counts[0] < 1:
        raise ConfigurationError("scaling needs at least two positive rank counts")
    if repetitions < 1:
        raise ConfigurationError("repetitions must be >= 1")
    records, results = [], []
    for n in counts:
        cfg = config_for(base, n, mode, counts[0])
        for rep in range(repetitions):
            res = run_scenario(cfg, run_id=f"{mode}-{n}-{rep}")
            res.record.mode = mode
            records.append(res.record)
            results.append(res)
            log.info("%s n=%d rep=%d wall=%.3fs elements/rank=%s", mode, n, rep, res.record.wall_clock_time,
                     res.rank_elements[0])
    rows = scaling_report(records, mode)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(base.to_yaml())
        (out / "version.json").write_text(json.dumps(version_stamp(), indent=2) + "\n")
        write_metrics_csv(out / "metrics.csv", records)
        write_scaling_csv(out / "scaling.csv", rows, mode)
    return ScalingResult(mode, rows, records, results)
