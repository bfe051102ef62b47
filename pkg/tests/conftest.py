import numpy as np
import pytest

from msflow import mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


def random_problem(rng, dims, contrast=2.0, with_boundary=False):
    """Random heterogeneous grid with compatible sources (and optionally
    boundary fluxes)."""
    grid = mesh.FineGrid(dims, tuple(rng.uniform(0.5, 1.5, 3)))
    kappa = np.exp(rng.standard_normal(grid.num_cells) * np.log(contrast))
    lam = rng.uniform(0.2, 1.0, grid.num_cells)
    source = rng.standard_normal(grid.num_cells)
    boundary = None
    total_in = 0.0
    if with_boundary:
        boundary = {}
        for f in grid.boundary_faces[:: max(1, grid.boundary_faces.size // 7)]:
            boundary[int(f)] = float(rng.standard_normal())
            total_in += boundary[int(f)] * grid.face_area[f]
    # balance: cell integrals of f must equal the net outward boundary flux
    source -= (source.sum() * grid.cell_volume - total_in) / (
        grid.num_cells * grid.cell_volume
    )
    return grid, kappa, lam, source, boundary
