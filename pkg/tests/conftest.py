"""Shared fixtures and small builders for the test suite."""

import numpy as np
import pytest

from cldamage.energetics import State
from cldamage.evolution import RunConfig, stretch_load
from cldamage.grid import GridSpec
from cldamage.material import ModelParams


def random_state(grid, rng, z_range=(0.05, 0.95), c_amp=0.8, u_amp=0.2):
    """Feasible state with smooth-ish random fields."""
    u = u_amp * rng.standard_normal((grid.dim,) + grid.node_shape)
    c = c_amp * rng.uniform(-1.0, 1.0, grid.shape)
    z = rng.uniform(*z_range, grid.shape)
    return State(u, c, z)


def benchmark_config(cells=256, steps=8, epsilon=1.0, **model):
    """Spinodal 1-D benchmark: cosine c⁰, intact z⁰, two-piece stretch."""
    grid = GridSpec.uniform((cells,), gamma_faces=("x-", "x+"))
    x = grid.cell_centers()[0]
    params = ModelParams(epsilon=epsilon, **model)
    load = stretch_load(grid, [0.0, 0.5, 1.0], [0.0, 0.3, 0.4])
    return RunConfig(1.0, steps, grid, params, 0.01 * np.cos(2 * np.pi * x), np.ones(grid.shape), load)


def benchmark_config_2d(cells=32, steps=8):
    grid = GridSpec.uniform((cells, cells), gamma_faces=("x-", "x+"))
    x, y = grid.cell_centers()
    c0 = 0.01 * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y)
    load = stretch_load(grid, [0.0, 0.5, 1.0], [0.0, 0.2, 0.3])
    return RunConfig(1.0, steps, grid, ModelParams(), c0, np.ones(grid.shape), load)


def local_damage_config(cells=64, steps=16):
    """Linear degradation, low threshold and a pre-weakened centre: the
    centre cells are driven to z = 0."""
    grid = GridSpec.uniform((cells,), gamma_faces=("x-", "x+"))
    x = grid.cell_centers()[0]
    params = ModelParams(phi_kind="linear", alpha=1.0, delta=0.01)
    z0 = 1.0 - 0.9 * np.exp(-(((x - 0.5) / 0.1) ** 2))
    load = stretch_load(grid, [0.0, 1.0], [0.0, 0.9])
    return RunConfig(1.0, steps, grid, params, 0.01 * np.cos(2 * np.pi * x), z0, load)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=[(16,), (6, 5)], ids=["1d", "2d"])
def small_grid(request):
    return GridSpec.uniform(request.param, gamma_faces=("x-",))


@pytest.fixture
def params():
    return ModelParams()
