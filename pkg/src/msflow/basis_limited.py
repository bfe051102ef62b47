"""Multiscale velocity basis seeded by a global single-phase presolve.

One basis function per interior coarse edge: its normal trace on the edge
is the single-phase fine-scale flux, it vanishes on the neighborhood
boundary, and inside each of the two coarse blocks it solves a mixed Darcy
problem with the block-constant divergence forced by the edge flux.
"""

import numpy as np

from . import mixed_fem
from .mixed_fem import LocalSolver, face_weights
from .spaces import MultiscaleSpace, columns_from_coo, parallel_map

ZERO_TRACE_RTOL = 1e-14


def solve_single_phase(grid, kappa, source, boundary_flux=None):
    """Fine-scale velocity for unit total mobility (the single-phase limit
    of the flow system)."""
    system = mixed_fem.assemble(grid, kappa, 1.0, source, boundary_flux)
    v, _ = mixed_fem.solve(system)
    return v


class BlockSolverCache:
    """Per-coarse-block factorized local solvers, shared across edges.

    All local problems of a basis build use the same frozen mobility, so a
    block factorized once serves every edge touching it.  Lookups after
    :meth:`prebuild` are read-only and thread-safe.
    """

    def __init__(self, partition, kappa, lam_basis):
        self.partition = partition
        self.grid = partition.grid
        lam = np.broadcast_to(
            np.asarray(lam_basis, dtype=float), (self.grid.num_cells,)
        )
        self.resist = 1.0 / (lam * np.asarray(kappa, dtype=float))
        self.weights = face_weights(self.grid, self.resist)
        self._solvers = {}

    def get(self, block):
        if block not in self._solvers:
            self._solvers[block] = LocalSolver(
                self.grid,
                self.partition.block_cells(block),
                self.resist,
                weights=self.weights,
            )
        return self._solvers[block]

    def prebuild(self, blocks, threads=1):
        blocks = [b for b in dict.fromkeys(blocks) if b not in self._solvers]
        solvers = parallel_map(
            lambda b: LocalSolver(
                self.grid,
                self.partition.block_cells(b),
                self.resist,
                weights=self.weights,
            ),
            blocks,
            threads,
        )
        self._solvers.update(zip(blocks, solvers))


def solve_edge_problem(cache, edge, trace):
    """Local neighborhood solve with a prescribed edge trace.

    Returns (rows, vals): the fine-face support and coefficients of a
    velocity field on omega_i with the given +axis trace on the edge, zero
    normal flux on the neighborhood boundary, and block-constant divergence
    matching the edge flux integral (source upstream, sink downstream).
    """
    partition = cache.partition
    grid = cache.grid
    faces = partition.edge_faces[edge]
    areas = grid.face_area[faces]
    net = float(trace @ areas)
    rows = [faces]
    vals = [trace]
    for side, block in enumerate(partition.edge_blocks[edge]):
        solver = cache.get(int(block))
        fixed = np.zeros(solver.fixed_faces.size)
        fixed[solver.fixed_positions(faces)] = trace
        sign = 1.0 if side == 0 else -1.0  # outflux of the low block
        source_int = np.full(solver.cells.size, sign * net / solver.cells.size)
        v_free, _ = solver.solve(source_int, fixed)
        rows.append(solver.free_faces)
        vals.append(v_free)
    return np.concatenate(rows), np.concatenate(vals)


def build_basis(partition, kappa, lam_basis, v_sp, threads=1):
    """Basis functions for every interior coarse edge from the single-phase
    flux ``v_sp``.

    Edges where the single-phase trace vanishes identically fall back to a
    uniform unit-integral trace and are flagged in ``fallback_edges``.
    """
    grid = partition.grid
    cache = BlockSolverCache(partition, kappa, lam_basis)
    cache.prebuild(partition.edge_blocks.ravel().tolist(), threads)
    v_scale = float(np.abs(v_sp).max())
    fallback = []

    def one_edge(edge):
        faces = partition.edge_faces[edge]
        trace = np.asarray(v_sp[faces], dtype=float)
        if np.abs(trace).max() <= ZERO_TRACE_RTOL * max(v_scale, 1e-300):
            trace = np.full(faces.size, 1.0 / partition.edge_area(edge))
            fallback.append(edge)
        return solve_edge_problem(cache, edge, trace)

    results = parallel_map(one_edge, range(partition.num_edges), threads)
    rows = np.concatenate([r for r, _ in results])
    cols = np.concatenate(
        [np.full(r.size, e) for e, (r, _) in enumerate(results)]
    )
    vals = np.concatenate([v for _, v in results])
    coeffs = columns_from_coo(grid.num_faces, rows, cols, vals, partition.num_edges)
    return MultiscaleSpace(
        partition,
        np.arange(partition.num_edges),
        ["limited"] * partition.num_edges,
        coeffs,
        fallback_edges=tuple(sorted(fallback)),
    )
