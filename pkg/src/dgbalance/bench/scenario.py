"""One benchmark run on the simulated cluster.

Every rank starts from an equal-count SFC partition.  Every K-th step is
timed; the per-element costs are gathered, smoothed and turned into an
imbalance value.  When balancing is enabled and the threshold is crossed
the ranks agree (by identical replicated computation) on a new partition,
move the state with one all-to-all and rebuild their local operators.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..balance import (
    BalanceEvent, build_exchange_plan, compute_imbalance, equal_count_offsets, execute_exchange,
    plan_rebalance,
)
from ..cluster import HaloExchange, spawn_cluster
from ..errors import CollectiveError, DgBalanceError, DivergenceError, ExchangeError, SynchronizationError, TopologyError
from ..kernel.lserk import get_scheme
from ..kernel.operator import AdvectionSetup, LocalDiscretization, advance_timestep, stable_dt
from ..kernel.reference import reference_operators
from ..mesh import Box, ElementType, Mesh, preset_mesh
from ..metrics import RunRecord, compute_efficiency, compute_pid, write_metrics_csv
from ..timing import CLOCKS, CostSmoother, TimerSet, attribute_costs, is_measurement_step, write_cost_csv
from .config import BenchConfig

log = logging.getLogger(__name__)


@dataclass
class ScenarioResult:
    config: BenchConfig
    record: RunRecord
    checksum: str
    trace: list[dict]
    events: list[BalanceEvent]
    costs: np.ndarray
    final_offsets: np.ndarray
    dt: float
    modal_overhead: float | None
    output_dir: Path | None = None
    rank_elements: list[list[int]] = field(default_factory=list)

    @property
    def n_rebalances(self) -> int:
        return sum(1 for e in self.events if e.executed)


def build_mesh(cfg: BenchConfig) -> Mesh:
    m = cfg.mesh
    box = Box((0.0, 0.0, 0.0), tuple(m.length))
    return preset_mesh(m.preset, tuple(m.dims), box)


def make_setup(cfg: BenchConfig) -> AdvectionSetup:
    return AdvectionSetup(N=cfg.mesh.N, n_var=cfg.mesh.n_var, velocity=tuple(cfg.velocity),
                          scheme=get_scheme(cfg.scheme))


def initial_condition(cfg: BenchConfig):
    """Smooth periodic data with seed-dependent phases, or a uniform state."""
    n_var = cfg.mesh.n_var
    if cfg.initial == "uniform":
        return lambda x: np.ones((n_var, len(x)))
    phase = np.random.default_rng(cfg.seed).random((n_var, 3))
    L = np.asarray(cfg.mesh.length)

    def wave(x):
        out = np.empty((n_var, len(x)))
        for v in range(n_var):
            s = np.sin(2 * np.pi * (x / L + phase[v]))
            out[v] = (v + 1) * (1.0 + 0.5 * s[:, 0] * s[:, 1] * s[:, 2])
        return out
    return wave


def resolve_steps(cfg: BenchConfig, dt: float) -> int:
    if cfg.end_time is not None:
        return max(1, int(np.ceil(cfg.end_time / dt - 1e-12)))
    return int(cfg.steps)


def n_dof(mesh: Mesh, setup: AdvectionSetup) -> int:
    from ..kernel.basis import build_basis
    counts = mesh.counts_by_type()
    total = 0
    for t in ElementType:
        c = counts.get(t.name, 0)
        if c:
            total += c * build_basis(t, setup.N).n_nodes
    return total * setup.n_var


def warm_operators(mesh: Mesh, setup: AdvectionSetup) -> None:
    # reference operators are cached per type; building them once up front keeps
    # the timed initial setup comparable to a later rebuild
    for t, c in mesh.counts_by_type().items():
        if c:
            reference_operators(ElementType[t], setup.N)


def _make_halo(comm, disc):
    if comm.size == 1:
        return None
    return HaloExchange(comm, disc.send_plan.keys(), disc.recv_plan.keys())


def _with_step(exc, step):
    # re-raise kernel/communication failures with the step they happened at
    if isinstance(exc, DivergenceError):
        return exc
    for cls in (ExchangeError, TopologyError, SynchronizationError, CollectiveError):
        if isinstance(exc, cls):
            return cls(f"step {step}: {exc}")
    return exc


class _RankProgram:
    def __init__(self, cfg: BenchConfig, mesh: Mesh, setup: AdvectionSetup, dt: float, steps: int):
        self.cfg, self.mesh, self.setup, self.dt, self.steps = cfg, mesh, setup, dt, steps
        self.initial = initial_condition(cfg)

    def _build(self, comm, offsets):
        r = comm.rank
        disc = LocalDiscretization(self.mesh, self.setup, (offsets[r], offsets[r + 1]), offsets, r)
        return disc, _make_halo(comm, disc)

    def _redistribute(self, comm, disc, old, new):
        r = comm.rank
        plan = build_exchange_plan(old, new, r)
        ids = np.arange(old[r], old[r + 1], dtype=np.int64)
        U, _ = execute_exchange(comm, plan, disc.get_state(), ids, new)
        disc, halo = self._build(comm, new)
        disc.set_state(U)
        return disc, halo

    def __call__(self, comm):
        cfg, bal = self.cfg, self.cfg.balance
        clock = CLOCKS[cfg.clock]
        offsets = equal_count_offsets(self.mesh.n_elems, comm.size)
        t0 = clock()
        disc, halo = self._build(comm, offsets)
        reinit = comm.all_reduce_max((clock() - t0) * 1e-9)
        disc.interpolate(self.initial)
        bytes_per_elem = self.setup.n_var * self.setup.slot_size * 8

        smoother = CostSmoother(bal.smoothing)
        idle = TimerSet(active=False, clock=cfg.clock)
        timers = TimerSet(active=True, clock=cfg.clock)
        trace, events = [], []
        smoothed = None
        comm.barrier()
        wall0 = time.perf_counter()
        for step in range(1, self.steps + 1):
            measure = is_measurement_step(step, bal.interval)
            if measure:
                timers.reset()
            try:
                advance_timestep(disc, self.dt, timers if measure else idle, halo, step=step,
                                 t=(step - 1) * self.dt)
            except DgBalanceError as exc:
                raise _with_step(exc, step) from exc
            if not measure:
                continue
            t_elem = attribute_costs(timers, disc.modal_flags, disc.side_to_local_elem)
            costs = np.concatenate(comm.all_gather(t_elem))
            smoothed = smoother.update(costs).copy()
            row = {"step": step, "imbalance": compute_imbalance(smoothed, offsets),
                   "raw_imbalance": compute_imbalance(costs, offsets), "rebalanced": False}
            row["imbalance_after"] = row["imbalance"]
            if bal.enabled:
                new, event = plan_rebalance(smoothed, offsets, bal.threshold, step=step,
                                            remaining_steps=self.steps - step, bytes_per_elem=bytes_per_elem,
                                            bandwidth=bal.bandwidth, reinit_time=reinit, mode=bal.mode)
                if event.reason != "below threshold":
                    events.append(event)
                if new is not None:
                    try:
                        t0 = clock()
                        disc, halo = self._redistribute(comm, disc, offsets, new)
                        reinit = comm.all_reduce_max((clock() - t0) * 1e-9)
                    except DgBalanceError as exc:
                        raise _with_step(exc, step) from exc
                    offsets = new
                    row["rebalanced"] = True
                    row["imbalance_after"] = event.new_imbalance
                    log.info("step %d: rebalanced %.3f -> %.3f, %d elements moved", step,
                             event.old_imbalance, event.new_imbalance, event.elements_moved)
            trace.append(row)
        comm.barrier()
        wall = time.perf_counter() - wall0

        parts = comm.all_gather(disc.get_state())
        out = {"wall": wall, "n_local": disc.n_local}
        if comm.rank == 0:
            U = np.concatenate(parts, axis=0)
            out.update(checksum=hashlib.sha256(np.ascontiguousarray(U, dtype="<f8").tobytes()).hexdigest(),
                       trace=trace, events=events, costs=smoothed, offsets=offsets)
        return out


def modal_overhead_ratio(costs, modal_flags) -> float | None:
    """Mean measured cost of a modal element over that of a hexahedron."""
    if costs is None or not modal_flags.any() or modal_flags.all():
        return None
    return float(costs[modal_flags].mean() / costs[~modal_flags].mean())


def version_stamp() -> dict:
    stamp = {"package": "dgbalance", "version": __version__, "python": platform.python_version(),
             "numpy": np.__version__}
    try:
        rev = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        if rev.returncode == 0:
            stamp["git"] = rev.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return stamp


def run_scenario(cfg: BenchConfig, mesh: Mesh | None = None, output_dir=None, run_id: str = "") -> ScenarioResult:
    mesh = mesh if mesh is not None else build_mesh(cfg)
    setup = make_setup(cfg)
    dt = cfg.dt if cfg.dt is not None else stable_dt(mesh, setup, cfg.cfl)
    steps = resolve_steps(cfg, dt)
    log.info("scenario %s: %d elements %s, N=%d, %d ranks, dt=%.6e, %d steps", cfg.scenario, mesh.n_elems,
             mesh.counts_by_type(), setup.N, cfg.n_ranks, dt, steps)
    warm_operators(mesh, setup)
    program = _RankProgram(cfg, mesh, setup, dt, steps)
    results = spawn_cluster(cfg.n_ranks, program, transport=cfg.transport, timeout=cfg.timeout)
    head = results[0]
    trace, events = head["trace"], head["events"]
    record = RunRecord(
        wall_clock_time=max(r["wall"] for r in results), n_ranks=cfg.n_ranks, n_dof=n_dof(mesh, setup),
        n_time_steps=steps, n_rk_stages=setup.scheme.n_stages, simulated_time=steps * dt,
        run_id=run_id or cfg.scenario, mode="single", n_elems_by_type=mesh.counts_by_type(), N=setup.N,
        imbalance_before=trace[0]["imbalance"] if trace else float("nan"),
        imbalance_after=trace[-1]["imbalance_after"] if trace else float("nan"),
        n_rebalances=sum(1 for e in events if e.executed),
    )
    result = ScenarioResult(
        config=cfg, record=record, checksum=head["checksum"], trace=trace, events=events, costs=head["costs"],
        final_offsets=np.asarray(head["offsets"]), dt=dt,
        modal_overhead=modal_overhead_ratio(head["costs"], mesh.modal_flags),
        rank_elements=[[r["n_local"] for r in results]],
    )
    out = output_dir if output_dir is not None else cfg.output_dir
    if out is not None:
        result.output_dir = write_outputs(result, Path(out))
    return result


def write_outputs(result: ScenarioResult, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(result.config.to_yaml())
    (out / "version.json").write_text(json.dumps(version_stamp(), indent=2) + "\n")
    with open(out / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "imbalance", "raw_imbalance", "rebalanced", "imbalance_after"])
        for row in result.trace:
            w.writerow([row["step"], repr(row["imbalance"]), repr(row["raw_imbalance"]),
                        int(row["rebalanced"]), repr(row["imbalance_after"])])
    with open(out / "events.jsonl", "w") as fh:
        for e in result.events:
            fh.write(json.dumps(e.as_dict()) + "\n")
    write_metrics_csv(out / "metrics.csv", [result.record])
    if result.costs is not None:
        last = result.trace[-1]["step"] if result.trace else 0
        write_cost_csv(out / "costs.csv", ((last, g, c) for g, c in enumerate(result.costs)))
    summary = {
        "checksum": result.checksum, "dt": result.dt, "steps": result.record.n_time_steps,
        "pid_s": compute_pid(result.record), "efficiency_s_per_cpu_h": compute_efficiency(result.record),
        "n_rebalances": result.n_rebalances, "modal_overhead_ratio": result.modal_overhead,
        "final_offsets": [int(v) for v in result.final_offsets],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return out
