"""``bench`` command line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 solution
divergence, 4 cluster or communication failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from ..errors import (
    ClusterError, ConfigurationError, DgBalanceError, DivergenceError, DomainError, MeshConsistencyError,
    MeshFormatError,
)
from ..kernel.operator import stable_dt
from ..mesh import generate_box_mesh, preset_mesh, read_mesh, split_to_mixed, write_mesh
from ..mesh.generate import PRESETS
from ..metrics import compute_efficiency, compute_pid
from .config import SCENARIOS, load_config, scenario_config, validate
from .scaling import run_scaling
from .scenario import build_mesh, make_setup, run_scenario

log = logging.getLogger("dgbalance.bench")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CLUSTER = 0, 2, 3, 4


def _triple(text):
    parts = [p for p in text.replace("x", ",").split(",") if p]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not integers: {text!r}") from None


def _int_list(text):
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _mix(text):
    out = {}
    for item in text.split(","):
        name, _, weight = item.partition("=")
        try:
            out[name.strip()] = float(weight)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad template weight {item!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Load-balancing benchmarks on a simulated cluster.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("scenario", nargs="?", choices=sorted(SCENARIOS))
    run.add_argument("--config", help="YAML config file (flags override it)")
    run.add_argument("--ranks", type=int)
    run.add_argument("--threshold", type=float)
    run.add_argument("--balance", choices=("on", "off"))
    run.add_argument("--interval", type=int)
    run.add_argument("--steps", type=int)
    run.add_argument("--dt", type=float)
    run.add_argument("--N", type=int, dest="degree")
    run.add_argument("--seed", type=int)
    run.add_argument("--transport", choices=("queue", "socket"))
    run.add_argument("--out")

    sc = sub.add_parser("scaling", help="strong or weak scaling sweep")
    sc.add_argument("--mode", choices=("strong", "weak"), default="strong")
    sc.add_argument("--ranks", type=_int_list, default=[1, 2, 4, 8])
    sc.add_argument("--scenario", choices=sorted(SCENARIOS), default="advect-scaling")
    sc.add_argument("--config")
    sc.add_argument("--repeat", type=int, default=5)
    sc.add_argument("--steps", type=int)
    sc.add_argument("--N", type=int, dest="degree")
    sc.add_argument("--out")

    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = msub.add_parser("gen", help="generate a periodic box mesh")
    gen.add_argument("--dims", type=_triple, default=(8, 8, 8))
    gen.add_argument("--preset", default="hex", choices=["hex", *sorted(PRESETS)])
    gen.add_argument("-o", "--output", required=True)
    gen.add_argument("--sidecar", action="store_true", help="also write a JSON summary next to the file")
    split = msub.add_parser("split", help="split a fraction of the hexes of a box mesh")
    split.add_argument("input")
    split.add_argument("-o", "--output", required=True)
    split.add_argument("--fraction", type=float, default=0.75)
    split.add_argument("--mix", type=_mix, default=None, help="e.g. tet=1,pyramid=2,prism=3")
    info = msub.add_parser("info", help="print a mesh summary")
    info.add_argument("input")
    return p


def _run_config(args):
    if args.config:
        cfg = load_config(args.config)
        if args.scenario:
            cfg.scenario = args.scenario
    elif args.scenario:
        cfg = scenario_config(args.scenario)
    else:
        raise ConfigurationError("give a scenario name or --config")
    if args.ranks is not None:
        cfg.n_ranks = args.ranks
    if args.threshold is not None:
        cfg.balance.threshold = args.threshold
    if args.balance is not None:
        cfg.balance.enabled = args.balance == "on"
    if args.interval is not None:
        cfg.balance.interval = args.interval
    if args.steps is not None:
        cfg.steps, cfg.end_time = args.steps, None
    if args.dt is not None:
        cfg.dt = args.dt
    if args.degree is not None:
        cfg.mesh.N = args.degree
    if args.seed is not None:
        cfg.seed = args.seed
    if args.transport is not None:
        cfg.transport = args.transport
    if args.out is not None:
        cfg.output_dir = args.out
    validate(cfg)
    return cfg


def cmd_run(args) -> int:
    cfg = _run_config(args)
    mesh = build_mesh(cfg)
    setup = make_setup(cfg)
    dt = cfg.dt if cfg.dt is not None else stable_dt(mesh, setup, cfg.cfl)
    print(f"scenario {cfg.scenario}: {mesh.n_elems} elements {mesh.counts_by_type()}, N={setup.N}, "
          f"{cfg.n_ranks} ranks, dt={dt:.6e} (cfl {cfg.cfl:g})")
    res = run_scenario(cfg, mesh=mesh)
    rec = res.record
    for row in res.trace:
        mark = f" -> {row['imbalance_after']:.4f}" if row["rebalanced"] else ""
        print(f"  step {row['step']:5d}  imbalance {row['imbalance']:.4f}{mark}")
    print(f"wall {rec.wall_clock_time:.3f} s, PID {compute_pid(rec):.4e} s, "
          f"efficiency {compute_efficiency(rec):.4e} s/CPU-h, rebalances {res.n_rebalances}")
    if res.modal_overhead is not None:
        print(f"modal/hex measured cost ratio {res.modal_overhead:.3f}")
    print(f"checksum {res.checksum}")
    if res.output_dir is not None:
        print(f"outputs in {res.output_dir}")
    return EXIT_OK


def cmd_scaling(args) -> int:
    cfg = load_config(args.config) if args.config else scenario_config(args.scenario)
    if args.steps is not None:
        cfg.steps, cfg.end_time = args.steps, None
    if args.degree is not None:
        cfg.mesh.N = args.degree
    res = run_scaling(cfg, args.ranks, args.mode, args.repeat, output_dir=args.out)
    label = "speedup" if args.mode == "strong" else "efficiency"
    print(f"{'ranks':>6} {'runs':>5} {'mean wall [s]':>14} {'mean PID [s]':>14} {label:>11}")
    for r in res.rows:
        print(f"{r.n_ranks:6d} {r.n_runs:5d} {r.mean_wall:14.4f} {r.mean_pid:14.4e} {r.normalized:11.4f}")
    if args.out:
        print(f"outputs in {args.out}")
    return EXIT_OK


def cmd_mesh(args) -> int:
    if args.mesh_command == "gen":
        mesh = preset_mesh(args.preset, args.dims) if args.preset != "hex" else generate_box_mesh(*args.dims)
        write_mesh(mesh, args.output, sidecar=args.sidecar)
        print(json.dumps(mesh.info(), indent=2))
    elif args.mesh_command == "split":
        mesh = split_to_mixed(read_mesh(args.input), args.fraction, args.mix)
        write_mesh(mesh, args.output)
        print(json.dumps(mesh.info(), indent=2))
    else:
        print(json.dumps(read_mesh(args.input).info(), indent=2))
    return EXIT_OK


def exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, ClusterError) else exc
    if isinstance(cause, DivergenceError):
        return EXIT_DIVERGED
    if isinstance(cause, (ConfigurationError, DomainError, MeshFormatError, MeshConsistencyError, OSError)):
        return EXIT_CONFIG
    return EXIT_CLUSTER


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "scaling": cmd_scaling, "mesh": cmd_mesh}
    try:
        return handlers[args.command](args)
    except (DgBalanceError, OSError) as exc:
        code = exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
