"""Shared fixtures: grids, matrices and densities are expensive, so the
suite builds them once per session and hands out cached views."""

import numpy as np
import pytest

from intermap.acceptance import AcceptanceContext
from intermap.grid import build_grid
from intermap.maps import MapParams
from intermap.transfer import assemble_transfer, invariant_density


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(512, 0.7, 30)


@pytest.fixture(scope="session")
def medium_grid():
    return build_grid(4096, 0.7, 50)


@pytest.fixture(scope="session")
def operator_cache(small_grid, medium_grid):
    """(alpha, grid_name) -> (matrix, density result)."""
    grids = {"small": small_grid, "medium": medium_grid}
    cache = {}

    def get(alpha, grid_name="medium", tol=1e-10, max_iter=300_000):
        key = (round(alpha, 12), grid_name)
        if key not in cache:
            grid = grids[grid_name]
            p = MapParams(alpha)
            matrix = assemble_transfer(p, grid)
            dens = invariant_density(p, grid, tol, max_iter, matrix=matrix)
            cache[key] = (matrix, dens)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def acceptance_ctx():
    """The full-size context shared by every acceptance criterion."""
    return AcceptanceContext(m_total=2 ** 14, seed=0)


def psi_cos(x):
    return np.cos(2.0 * np.pi * np.asarray(x, dtype=float))
