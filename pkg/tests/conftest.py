import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dgbalance.mesh import generate_box_mesh, preset_mesh, split_to_mixed

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

MIX = {"tet": 1, "pyramid": 2, "prism": 3}


@pytest.fixture(scope="session")
def hex8():
    return generate_box_mesh(8, 8, 8)


@pytest.fixture(scope="session")
def mixed8():
    return preset_mesh("paper-tgv-mixed")


@pytest.fixture(scope="session")
def mixed4():
    # small mesh holding all four element types
    return split_to_mixed(generate_box_mesh(4, 4, 4), 0.75, MIX)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sine_wave(velocity, t=0.0):
    a = np.asarray(velocity, dtype=float)
    return lambda x: np.sin(2 * np.pi * (x - a * t)).prod(axis=1)[None]


def advect(mesh, setup, dt, T, initial):
    from dgbalance.kernel.operator import LocalDiscretization, advance_timestep
    disc = LocalDiscretization(mesh, setup)
    disc.interpolate(initial)
    n = int(round(T / dt))
    for step in range(1, n + 1):
        advance_timestep(disc, dt, step=step)
    return disc


def temporal_slopes(N=3, dims=(4, 4, 4), n_refine=4, T=0.4):
    """Errors of CK45 against a fine-dt reference on the same mesh, and the fitted slope."""
    from dgbalance.kernel.operator import AdvectionSetup, stable_dt
    mesh = generate_box_mesh(*dims)
    setup = AdvectionSetup(N=N)
    init = sine_wave(setup.velocity)
    dt0 = T / int(np.ceil(T / stable_dt(mesh, setup)))
    dts = [dt0 / 2 ** k for k in range(n_refine)]
    ref = advect(mesh, setup, dts[-1] / 8, T, init).get_state()
    errs = [np.sqrt(np.mean((advect(mesh, setup, dt, T, init).get_state() - ref) ** 2)) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    return dts, errs, slope


_RUNS = {}


def cached_run(scenario, **overrides):
    """Run a scenario once per session for a given set of overrides."""
    from dgbalance.bench.config import scenario_config
    from dgbalance.bench.scenario import run_scenario
    cfg = scenario_config(scenario, **overrides)
    key = cfg.to_yaml()
    if key not in _RUNS:
        _RUNS[key] = run_scenario(cfg)
    return _RUNS[key]
