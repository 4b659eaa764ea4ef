"""Benchmark configuration: presets, YAML loading and validation."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields

import yaml

from ..balance import DEFAULT_THRESHOLD
from ..errors import ConfigurationError
from ..kernel.basis import MAX_DEGREE
from ..kernel.lserk import SCHEMES
from ..mesh.generate import PRESETS as MESH_PRESETS


@dataclass
class MeshSpec:
    dims: tuple[int, int, int] = (8, 8, 8)
    preset: str = "hex"         # "hex" or a key of mesh.generate.PRESETS
    N: int = 5
    n_var: int = 1
    length: tuple[float, float, float] = (1.0, 1.0, 1.0)


@dataclass
class BalanceSpec:
    enabled: bool = True
    threshold: float = DEFAULT_THRESHOLD
    interval: int = 10
    smoothing: float = 0.5
    mode: str = "greedy"
    bandwidth: float = 1.0e9    # bytes/s assumed for the amortisation estimate


@dataclass
class BenchConfig:
    scenario: str = "custom"
    mesh: MeshSpec = field(default_factory=MeshSpec)
    n_ranks: int = 1
    steps: int = 50
    dt: float | None = None
    end_time: float | None = None
    cfl: float = 1.0
    initial: str = "wave"       # "wave" or "uniform"
    velocity: tuple[float, float, float] = (1.0, 0.5, 0.25)
    scheme: str = "ck45"
    balance: BalanceSpec = field(default_factory=BalanceSpec)
    seed: int = 0
    output_dir: str | None = None
    transport: str = "queue"
    timeout: float = 120.0
    clock: str = "thread"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mesh"]["dims"] = list(self.mesh.dims)
        d["mesh"]["length"] = list(self.mesh.length)
        d["velocity"] = list(self.velocity)
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


SCENARIOS = {
    "hex-box": {"mesh": {"dims": [8, 8, 8], "preset": "hex", "N": 5}, "n_ranks": 4, "steps": 50},
    "mixed-box": {"mesh": {"dims": [8, 8, 8], "preset": "paper-tgv-mixed", "N": 5}, "n_ranks": 4, "steps": 50},
    "advect-scaling": {"mesh": {"dims": [8, 8, 8], "preset": "hex", "N": 5}, "n_ranks": 1, "steps": 20,
                       "initial": "uniform", "balance": {"enabled": False}},
}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return cls(**data)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_dict(data: dict) -> BenchConfig:
    data = dict(data or {})
    name = data.get("scenario")
    if name in SCENARIOS:
        data = _merge(SCENARIOS[name], data)
    mesh = _build(MeshSpec, data.pop("mesh", {}) or {}, "mesh")
    bal = _build(BalanceSpec, data.pop("balance", {}) or {}, "balance")
    cfg = _build(BenchConfig, data, "config")
    cfg.mesh, cfg.balance = mesh, bal
    mesh.dims = tuple(int(d) for d in mesh.dims)
    mesh.length = tuple(float(x) for x in mesh.length)
    cfg.velocity = tuple(float(x) for x in cfg.velocity)
    validate(cfg)
    return cfg


def scenario_config(name: str, **overrides) -> BenchConfig:
    if name not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    over = {k: v for k, v in overrides.items() if v is not None}
    return config_from_dict(_merge({"scenario": name}, over))


def load_config(path) -> BenchConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def validate(cfg: BenchConfig) -> None:
    m = cfg.mesh
    if len(m.dims) != 3 or any(d < 1 for d in m.dims):
        raise ConfigurationError(f"mesh dims must be three positive integers, got {m.dims}")
    if m.preset != "hex" and m.preset not in MESH_PRESETS:
        raise ConfigurationError(f"unknown mesh preset {m.preset!r}")
    if not 1 <= m.N <= MAX_DEGREE:
        raise ConfigurationError(f"N must lie in [1, {MAX_DEGREE}], got {m.N}")
    if m.n_var < 1:
        raise ConfigurationError("n_var must be positive")
    if len(m.length) != 3 or any(x <= 0 for x in m.length):
        raise ConfigurationError("box lengths must be positive")
    if cfg.n_ranks < 1:
        raise ConfigurationError("n_ranks must be positive")
    if cfg.steps is not None and cfg.steps < 1 and cfg.end_time is None:
        raise ConfigurationError("steps must be positive")
    if cfg.dt is not None and not cfg.dt > 0:
        raise ConfigurationError("dt must be positive")
    if cfg.end_time is not None and not cfg.end_time > 0:
        raise ConfigurationError("end_time must be positive")
    if not cfg.cfl > 0:
        raise ConfigurationError("cfl must be positive")
    if cfg.initial not in ("wave", "uniform"):
        raise ConfigurationError(f"unknown initial condition {cfg.initial!r}")
    if len(cfg.velocity) != 3:
        raise ConfigurationError("velocity needs three components")
    if cfg.scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {cfg.scheme!r}")
    b = cfg.balance
    if not b.threshold > 1.0:
        raise ConfigurationError(f"threshold must exceed 1, got {b.threshold}")
    if b.interval < 1:
        raise ConfigurationError("measurement interval must be >= 1")
    if not 0 < b.smoothing <= 1:
        raise ConfigurationError("smoothing weight must lie in (0, 1]")
    if b.mode not in ("greedy", "exact"):
        raise ConfigurationError(f"unknown partition mode {b.mode!r}")
    if not b.bandwidth > 0:
        raise ConfigurationError("bandwidth must be positive")
    if cfg.transport not in ("queue", "socket"):
        raise ConfigurationError(f"unknown transport {cfg.transport!r}")
    if not cfg.timeout > 0:
        raise ConfigurationError("timeout must be positive")
    if cfg.clock not in ("thread", "wall", "process"):
        raise ConfigurationError(f"unknown clock {cfg.clock!r}")
