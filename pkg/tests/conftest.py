"""Shared fixtures: seeded fields and session-scoped solver runs."""

import numpy as np
import pytest

from mhdlab.grid import GridSpec
from mhdlab.solver import SolverConfig, init_random_solenoidal, run

BOX = 2.0 * np.pi
R0_DEFAULT = BOX / 8.0


@pytest.fixture(scope="session")
def grid32():
    return GridSpec(n=32, box_length=BOX)


@pytest.fixture(scope="session")
def run32():
    """32³ decaying run, dense enough in time for budget quadrature."""
    grid = GridSpec(n=32, box_length=BOX)
    init = init_random_solenoidal(grid, spectrum_slope=-2.0, seed=7)
    T = 0.25
    cfg = SolverConfig(
        viscosity=0.05, resistivity=0.05, dt=T / 128.0, t_end=T, snapshot_stride=2
    )
    return run(init, cfg)


@pytest.fixture(scope="session")
def run64():
    """64³ decaying run used by the budget and interpolation acceptance checks."""
    grid = GridSpec(n=64, box_length=BOX)
    init = init_random_solenoidal(grid, spectrum_slope=-2.0, seed=5)
    T = 0.5
    cfg = SolverConfig(
        viscosity=0.02, resistivity=0.02, dt=T / 256.0, t_end=T, snapshot_stride=4
    )
    return run(init, cfg)


@pytest.fixture(scope="session")
def run64_cascade():
    """64³ low-dissipation run for the cascade report acceptance check."""
    grid = GridSpec(n=64, box_length=BOX)
    init = init_random_solenoidal(grid, spectrum_slope=-2.0, seed=9)
    T = 0.5
    cfg = SolverConfig(
        viscosity=5e-3, resistivity=5e-3, dt=T / 256.0, t_end=T, snapshot_stride=8
    )
    return run(init, cfg)


@pytest.fixture(scope="session")
def ot64():
    """64³ Orszag–Tang run of 60 steps for the energy-balance check."""
    from mhdlab.solver import init_orszag_tang_3d

    grid = GridSpec(n=64, box_length=BOX)
    init = init_orszag_tang_3d(grid, amplitude=1.0)
    cfg = SolverConfig(
        viscosity=0.05, resistivity=0.05, dt=0.004, t_end=0.24, snapshot_stride=10
    )
    return run(init, cfg)


def memoized_density(series, kind):
    """Callable density backed by per-snapshot precomputed arrays.

    Avoids recomputing curls for every cover when a check iterates over
    many covers of the same series.
    """
    from mhdlab.ensemble import _density_array

    cache = {id(s): _density_array(s, kind) for s in series.states}
    return lambda state: cache[id(state)]
