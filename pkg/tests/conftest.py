"""Shared fixtures.

The nudged-run fixture is session-scoped because the energy-identity
diagnostics need a run long enough (1000 steps at desk resolution) that
rebuilding it per test would dominate the suite.
"""

import numpy as np
import pytest

from nudge_lab.assimilation import NudgingConfig, run_sync_experiment
from nudge_lab.interpolants import Modal
from nudge_lab.spectral import FlowState, Grid, Params, random_field


@pytest.fixture(scope="session")
def unit_torus():
    return Grid(2, "torus", (1.0, 1.0), (32, 32))


@pytest.fixture(scope="session")
def torus_lambda1_one():
    """Periodic box with lambda_1 = 1, where the threshold formulas reduce
    to bare arithmetic."""
    return Grid(2, "torus", (2 * np.pi, 2 * np.pi), (8, 8))


def seeded_flow(grid, seed, energy=5e-3, band=8, slope=3.0, with_theta=True):
    u = random_field(grid, np.random.default_rng(seed), ncomp=2, band=band,
                     slope=slope, divergence_free=True, energy=energy)
    theta = None
    if with_theta:
        theta = random_field(grid, np.random.default_rng(seed + 1000), band=band,
                             slope=slope, energy=energy)
    return FlowState(u, theta, 0.0)


@pytest.fixture(scope="session")
def resolved_twin():
    """Twin run with a nudging transient spread over many steps.

    At the admissible-interval midpoint mu*dt is O(1) and the velocity
    error collapses inside a single step, which no trapezoid accumulator
    can resolve; a moderate forced mu keeps every recorded energy identity
    within quadrature reach.  1000 steps at desk resolution.
    """
    grid = Grid(2, "torus", (0.5, 0.5), (128, 128))
    p = Params(nu=1e-2, kappa=1e-2, c_interp=1e-4)
    cfg = NudgingConfig(interpolant=Modal(grid, 8), dt=2e-3, mu=25.0, force=True)
    res = run_sync_experiment(seeded_flow(grid, 3), cfg, p, T=2.0, record_every=1)
    return res, p
