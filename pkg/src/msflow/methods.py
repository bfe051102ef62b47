"""Pressure-solver handles for the IMPES loop: the fine reference solver and
the two multiscale methods behind one interface.

A handle owns whatever was built during setup (nothing for the reference,
the frozen basis prolongations for the multiscale methods) and exposes
``solve_pressure(lam_per_cell)``.  Multiscale velocities are postprocessed
to cellwise conservation whenever the transport source varies inside a
coarse block (configurable).
"""

import time

import numpy as np

from . import basis_gmsfem, basis_limited, coarse_system, mesh, mixed_fem
from .postprocess import mean_postprocess


def source_varies_within_blocks(partition, source):
    src = np.broadcast_to(
        np.asarray(source, dtype=float), (partition.grid.num_cells,)
    )
    mn = np.full(partition.num_blocks, np.inf)
    mx = np.full(partition.num_blocks, -np.inf)
    np.minimum.at(mn, partition.block_of_cell, src)
    np.maximum.at(mx, partition.block_of_cell, src)
    return bool(np.any(mx > mn))


class ReferenceMethod:
    method = "reference"

    def __init__(self, grid, kappa, source, boundary_flux=None):
        self.grid = grid
        self.kappa = np.asarray(kappa, dtype=float)
        self.source = source
        self.boundary_flux = boundary_flux
        self.setup_seconds = 0.0
        self.dof = mesh.fine_dof(grid)

    def solve_pressure(self, lam):
        system = mixed_fem.assemble(
            self.grid, self.kappa, lam, self.source, self.boundary_flux
        )
        return mixed_fem.solve(system)


class MultiscaleMethod:
    def __init__(
        self,
        method,
        partition,
        kappa,
        source,
        space,
        boundary_flux=None,
        postprocess="auto",
        threads=1,
        setup_seconds=0.0,
    ):
        self.method = method
        self.partition = partition
        self.grid = partition.grid
        self.kappa = np.asarray(kappa, dtype=float)
        self.source = source
        self.boundary_flux = boundary_flux
        self.space = space
        self.operator = coarse_system.build_operator(space)
        self.threads = threads
        self.setup_seconds = setup_seconds
        self.dof = partition.num_blocks + space.dim
        if postprocess not in ("auto", "always", "never"):
            raise ValueError(f"unknown postprocess policy {postprocess!r}")
        if postprocess == "auto":
            self.postprocess_on = source_varies_within_blocks(partition, source)
        else:
            self.postprocess_on = postprocess == "always"

    def solve_pressure(self, lam):
        system = mixed_fem.assemble(
            self.grid, self.kappa, lam, self.source, self.boundary_flux
        )
        v, p, _, _ = coarse_system.solve_multiscale(self.operator, system)
        if self.postprocess_on:
            v = mean_postprocess(
                self.partition, self.kappa, lam, self.source, v, self.threads
            )
        return v, p


def make_reference(grid, kappa, source, boundary_flux=None):
    return ReferenceMethod(grid, kappa, source, boundary_flux)


def make_mmsfem(
    partition,
    kappa,
    lam_basis,
    source,
    boundary_flux=None,
    postprocess="auto",
    threads=1,
):
    """Limited-global-information method: single-phase presolve with the run's
    own sources, one basis function per coarse edge."""
    grid = partition.grid
    t0 = time.perf_counter()
    v_sp = basis_limited.solve_single_phase(grid, kappa, source, boundary_flux)
    space = basis_limited.build_basis(partition, kappa, lam_basis, v_sp, threads)
    setup = time.perf_counter() - t0
    return MultiscaleMethod(
        "mmsfem",
        partition,
        kappa,
        source,
        space,
        boundary_flux,
        postprocess,
        threads,
        setup,
    )


def make_mgmsfem(
    partition,
    kappa,
    lam_basis,
    source,
    offline=2,
    online=0,
    oversample_layers=None,
    boundary_flux=None,
    postprocess="auto",
    threads=1,
    builder=None,
):
    """Generalized method with ``offline`` spectral functions per edge and
    ``online`` residual-driven sweeps."""
    grid = partition.grid
    t0 = time.perf_counter()
    if builder is None:
        builder = basis_gmsfem.GmsfemBuilder(partition, kappa, lam_basis, threads)
    space = builder.offline_space(offline)
    if online > 0:
        system = mixed_fem.assemble(grid, kappa, lam_basis, source, boundary_flux)
        space, _ = builder.enrich(space, system, online, oversample_layers)
    setup = time.perf_counter() - t0
    return MultiscaleMethod(
        f"mgmsfem({offline}+{online})",
        partition,
        kappa,
        source,
        space,
        boundary_flux,
        postprocess,
        threads,
        setup,
    )
