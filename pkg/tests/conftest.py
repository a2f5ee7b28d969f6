"""Shared, session-scoped simulation results.

The expensive objects (a classified branch above the cusp, the full
noise-free frequency sweep, the noisy sweep) are computed once and reused by
the unit and acceptance tests.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cbcont import ControlLoop, FilterSpec, LoopSettings, PDGains, PlantConfig, make_plant  # noqa: E402
from cbcont.continuation import StepControl, track_branch  # noqa: E402
from cbcont.surface import sweep_branches  # noqa: E402

SWEEP_HZ = np.round(np.arange(18.0, 24.0 + 1e-9, 0.2), 10)
SWEEP_STEP = dict(max_step=0.03, max_points=60, max_amplitude=1.3)
R_TYP = 0.5
# tighter than the library default so corrector residuals stay below 5% of the
# higher-harmonic content on weakly nonlinear points
ACCEPT_TOL = 2e-4


@pytest.fixture(scope="session")
def duffing_config():
    return PlantConfig()


@pytest.fixture(scope="session")
def duffing_steady(duffing_config):
    """One settled period of the open-loop Duffing response at 22 Hz."""
    plant = make_plant(duffing_config)
    omega = ControlLoop(plant, 2 * math.pi * 22.0).omega
    n = int(round(plant.sample_rate * 2 * math.pi / omega))
    plant.run_uncontrolled((0.02, 0.0, omega), 60 * n * plant.dt)
    run = plant.run_uncontrolled((0.02, 0.0, omega), n * plant.dt)
    return run.x, omega, plant.sample_rate


def _branch(config, hz, classify=True, **step):
    plant = make_plant(config)
    loop = ControlLoop(plant, 2 * math.pi * hz, filter_spec=FilterSpec(), settings=LoopSettings(rel_tol=ACCEPT_TOL))
    t0 = time.perf_counter()
    br = track_branch(loop, step=StepControl(**{**SWEEP_STEP, **step}),
                      classify_plant=plant if classify else None, tol=ACCEPT_TOL)
    return br, loop, time.perf_counter() - t0


@pytest.fixture(scope="session")
def branch24(duffing_config):
    """Classified branch at 24 Hz, above the cusp."""
    return _branch(duffing_config, 24.0)


@pytest.fixture(scope="session")
def branch20(duffing_config):
    """Branch at 20 Hz, below the cusp."""
    return _branch(duffing_config, 20.0, classify=False)


@pytest.fixture(scope="session")
def sweep(duffing_config):
    """Full noise-free sweep 18-24 Hz at 0.2 Hz: (branches, wall seconds)."""
    t0 = time.perf_counter()
    branches = sweep_branches(duffing_config, 2 * np.pi * SWEEP_HZ, PDGains(), FilterSpec(),
                              LoopSettings(rel_tol=ACCEPT_TOL), 7, StepControl(**SWEEP_STEP), (0.02, 0.024),
                              {"tol": ACCEPT_TOL}, classify=True)
    return branches, time.perf_counter() - t0


@pytest.fixture(scope="session")
def noisy_sweep():
    """The same sweep with sensor noise 1e-3 * R_typ, without classification."""
    cfg = PlantConfig(noise_std=1e-3 * R_TYP, rng_seed=7)
    settings = LoopSettings(amplitude_floor=R_TYP, forcing_floor=R_TYP)
    return sweep_branches(cfg, 2 * np.pi * SWEEP_HZ, PDGains(), FilterSpec(), settings, 7,
                          StepControl(**SWEEP_STEP), (0.02, 0.024), {}, classify=False)
