"""Generalized multiscale basis pipeline: per-edge snapshot spaces, local
spectral reduction to offline functions, and residual-driven online
enrichment on oversampled neighborhoods.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import coarse_system, mesh, mixed_fem
from .basis_limited import BlockSolverCache, solve_edge_problem
from .spaces import MultiscaleSpace, columns_from_coo, parallel_map

SNAPSHOT_TOL = 1e-12
EIG_RESIDUAL_TOL = 1e-8
ONLINE_SKIP_RTOL = 1e-7


class AssemblyFault(RuntimeError):
    pass


@dataclass
class SnapshotSet:
    """All unit-subface velocity solutions of one coarse edge.

    ``values`` holds the fine-face coefficients (one column per snapshot)
    on ``support_faces`` = interior faces of the two blocks plus the edge
    faces; the trace block on the edge faces is the identity by
    construction.  Divergence is constant per block (``div_low``,
    ``div_high`` per snapshot).
    """

    edge: int
    face_ids: np.ndarray
    support_faces: np.ndarray
    values: np.ndarray
    div_low: np.ndarray
    div_high: np.ndarray
    n_free_low: int
    n_free_high: int


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    vectors: np.ndarray  # column k = k-th eigenvector in snapshot coordinates


class GmsfemBuilder:
    """Builds and caches the per-edge snapshot/spectral data for one
    (field, basis mobility, coarsening) triple."""

    def __init__(self, partition, kappa, lam_basis, threads=1):
        self.partition = partition
        self.grid = partition.grid
        self.threads = threads
        self.cache = BlockSolverCache(partition, kappa, lam_basis)
        self.cache.prebuild(partition.edge_blocks.ravel().tolist(), threads)
        self._modes = {}
        self._riesz = None

    # -- snapshots ---------------------------------------------------------

    def build_snapshots(self, edge):
        partition = self.partition
        grid = self.grid
        faces = partition.edge_faces[edge]
        areas = grid.face_area[faces]
        j_count = faces.size
        low, high = (int(b) for b in partition.edge_blocks[edge])
        s_low, s_high = self.cache.get(low), self.cache.get(high)
        pos_low = s_low.fixed_positions(faces)
        pos_high = s_high.fixed_positions(faces)
        n_lo, n_hi = s_low.free_faces.size, s_high.free_faces.size
        support = np.concatenate([s_low.free_faces, s_high.free_faces, faces])
        values = np.zeros((support.size, j_count))
        block_vol = partition.block_volume
        div_low = areas / block_vol
        div_high = -areas / block_vol
        fixed_lo = np.zeros(s_low.fixed_faces.size)
        fixed_hi = np.zeros(s_high.fixed_faces.size)
        for j in range(j_count):
            fixed_lo[pos_low[j]] = 1.0
            src = np.full(s_low.cells.size, areas[j] / s_low.cells.size)
            v_free, _ = s_low.solve(src, fixed_lo)
            values[:n_lo, j] = v_free
            fixed_lo[pos_low[j]] = 0.0

            fixed_hi[pos_high[j]] = 1.0
            v_free, _ = s_high.solve(-src, fixed_hi)
            values[n_lo : n_lo + n_hi, j] = v_free
            fixed_hi[pos_high[j]] = 0.0

            values[n_lo + n_hi + j, j] = 1.0
        return SnapshotSet(
            edge, faces, support, values, div_low, div_high, n_lo, n_hi
        )

    # -- spectral reduction --------------------------------------------------

    def assemble_spectral(self, snaps):
        """Edge form a_i and neighborhood energy form s_i in snapshot
        coordinates (both symmetric, s_i positive definite)."""
        grid = self.grid
        fc = grid.face_cells[snaps.face_ids]
        resist = self.cache.resist
        edge_coef = 0.5 * (resist[fc[:, 0]] + resist[fc[:, 1]])
        trace = snaps.values[-snaps.face_ids.size :, :]
        a_i = trace.T @ (
            (edge_coef * grid.face_area[snaps.face_ids])[:, None] * trace
        )
        w = self.cache.weights[snaps.support_faces]
        s_mass = snaps.values.T @ (w[:, None] * snaps.values)
        s_div = self.partition.block_volume * (
            np.outer(snaps.div_low, snaps.div_low)
            + np.outer(snaps.div_high, snaps.div_high)
        )
        s_i = s_mass + s_div
        for name, m in (("edge form", a_i), ("energy form", s_i)):
            skew = np.abs(m - m.T).max()
            if skew > 1e-12 * max(np.abs(m).max(), 1e-300):
                raise AssemblyFault(f"{name} lost symmetry by {skew:.3e}")
        return a_i, s_i

    def edge_modes(self, edge):
        if edge not in self._modes:
            snaps = self.build_snapshots(edge)
            a_i, s_i = self.assemble_spectral(snaps)
            self._modes[edge] = (snaps, solve_spectral(a_i, s_i, (a_i, s_i)))
        return self._modes[edge]

    # -- offline space -------------------------------------------------------

    def offline_space(self, counts):
        """Offline space with ``counts`` basis functions per edge (scalar or
        per-edge array), taken from the smallest-eigenvalue end."""
        partition = self.partition
        counts = np.broadcast_to(
            np.asarray(counts, dtype=int), (partition.num_edges,)
        )
        for edge in range(partition.num_edges):
            j_i = partition.edge_tangential_count(edge)
            if not 1 <= counts[edge] <= j_i:
                raise ValueError(
                    f"offline count {counts[edge]} on edge {edge} outside "
                    f"1..J_i={j_i}"
                )
        # warm the per-edge cache in parallel, then assemble deterministically
        parallel_map(self.edge_modes, range(partition.num_edges), self.threads)
        rows, cols, vals, edge_ids = [], [], [], []
        col = 0
        for edge in range(partition.num_edges):
            snaps, modes = self.edge_modes(edge)
            take = modes.vectors[:, : counts[edge]]
            block = snaps.values @ take
            for k in range(counts[edge]):
                rows.append(snaps.support_faces)
                cols.append(np.full(snaps.support_faces.size, col))
                vals.append(block[:, k])
                edge_ids.append(edge)
                col += 1
        coeffs = columns_from_coo(
            self.grid.num_faces,
            np.concatenate(rows),
            np.concatenate(cols),
            np.concatenate(vals),
            col,
        )
        return MultiscaleSpace(
            partition, np.array(edge_ids), ["offline"] * col, coeffs
        )

    # -- online enrichment -----------------------------------------------------

    def online_basis(self, edge, layers, system, residual, v_energy):
        """Residual-driven basis for one edge, or None when the residual
        trace on the edge has converged.

        The Riesz representative of the residual functional over the fine
        face space of the oversampled neighborhood (zero normal flux on its
        boundary) is computed as a mixed local solve with the residual as
        velocity data: the divergence constraint absorbs the part of the
        residual carried by the coarse pressure.  The representative's edge
        trace, normalized in L2 of the edge, prescribes the new basis
        function's flux.
        """
        over = mesh.oversample(self.partition, edge, layers)
        solver = mixed_fem.LocalSolver(
            self.grid, over.cells, system.resist, weights=system.diag
        )
        g = residual[solver.free_faces]
        phi_free, _ = solver.solve(
            np.zeros(solver.cells.size), rhs_v=g
        )
        faces = self.partition.edge_faces[edge]
        pos = np.searchsorted(solver.free_faces, faces)
        if np.any(solver.free_faces[np.clip(pos, 0, solver.free_faces.size - 1)]
                  != faces):
            raise AssemblyFault("edge faces must lie inside the oversampled region")
        trace = phi_free[pos]
        areas = self.grid.face_area[faces]
        norm = float(np.sqrt(trace @ (areas * trace)))
        if norm <= ONLINE_SKIP_RTOL * max(v_energy, 1e-300):
            return None
        return solve_edge_problem(self.cache, edge, trace / norm)

    def enrich(self, space, system, sweeps, layers=None):
        """Grow ``space`` by one online function per edge per sweep.

        Each sweep re-solves the coarse problem, evaluates the fine-scale
        residual of the downscaled solution, and appends the per-edge online
        functions.  Returns the enriched space and the global residual
        functional norm before/after each sweep.
        """
        partition = self.partition
        if layers is None:
            layers = mesh.default_oversample_layers(partition)
        riesz = self.domain_riesz_solver(system)
        norms = []
        for _ in range(int(sweeps)):
            v, p, _, _ = coarse_system.solve_multiscale(space, system)
            r = residual_vector(system, v, p)
            norms.append(residual_norm(system, r, riesz))
            v_energy = float(np.sqrt(np.sum(system.diag * v * v)))
            cols = parallel_map(
                lambda e: self.online_basis(e, layers, system, r, v_energy),
                range(partition.num_edges),
                self.threads,
            )
            rows_, cols_, vals_, edges_ = [], [], [], []
            k = 0
            for edge, res in enumerate(cols):
                if res is None:
                    continue
                rr, vv = res
                rows_.append(rr)
                cols_.append(np.full(rr.size, k))
                vals_.append(vv)
                edges_.append(edge)
                k += 1
            if k == 0:
                columns = columns_from_coo(
                    self.grid.num_faces, [], [], [], 0
                )
            else:
                columns = columns_from_coo(
                    self.grid.num_faces,
                    np.concatenate(rows_),
                    np.concatenate(cols_),
                    np.concatenate(vals_),
                    k,
                )
            space = space.extended(
                np.array(edges_, dtype=np.int64), ["online"] * k, columns
            )
        v, p, _, _ = coarse_system.solve_multiscale(space, system)
        norms.append(residual_norm(system, residual_vector(system, v, p), riesz))
        return space, np.array(norms)

    def domain_riesz_solver(self, system):
        """Whole-domain mixed solver at the system's mobility, factorized
        once and reused for every global residual-norm evaluation."""
        if self._riesz is None or self._riesz[0] is not system:
            solver = mixed_fem.LocalSolver(
                self.grid, None, system.resist, weights=system.diag
            )
            self._riesz = (system, solver)
        return self._riesz[1]


def solve_spectral(a_i, s_i, check=None):
    """Generalized eigenpairs of (a_i, s_i), eigenvalues ascending.

    ``s_i`` must be symmetric positive definite; the generalized residual of
    every returned pair is verified.
    """
    a_i = np.asarray(a_i, dtype=float)
    s_i = np.asarray(s_i, dtype=float)
    try:
        eigenvalues, vectors = scipy.linalg.eigh(a_i, s_i)
    except scipy.linalg.LinAlgError as err:
        raise AssemblyFault(f"energy form is not positive definite: {err}") from err
    scale = max(np.abs(a_i).max(), np.abs(s_i).max(), 1e-300)
    res = a_i @ vectors - s_i @ vectors * eigenvalues[None, :]
    worst = np.abs(res).max() / scale
    if worst > EIG_RESIDUAL_TOL:
        raise AssemblyFault(f"eigensolver residual {worst:.3e} too large")
    return SpectralResult(eigenvalues, vectors)


def residual_vector(system, v_h, p_h):
    """Fine-scale residual functional coefficients: the value against the
    unit basis function of a free face is (A v + B^T p) there; fixed and
    boundary faces carry zero by convention."""
    r = system.diag * v_h + system.B.T @ p_h
    r[system.fixed_faces] = 0.0
    r[system.grid.boundary_faces] = 0.0
    return r


def compute_residual(system, v_h, p_h, cells=None):
    """Residual functional restricted to the fine faces interior to the
    given cell set (all interior faces when ``cells`` is None).

    ``v_h``/``p_h`` must already be fine-grid fields (downscaled coarse
    solutions).  Returns (face ids, residual values).
    """
    r = residual_vector(system, v_h, p_h)
    grid = system.grid
    faces = grid.interior_faces
    if cells is not None:
        mask = np.zeros(grid.num_cells, dtype=bool)
        mask[np.asarray(cells)] = True
        fc = grid.face_cells[faces]
        faces = faces[mask[fc[:, 0]] & mask[fc[:, 1]]]
    fixed = np.isin(faces, system.fixed_faces)
    faces = faces[~fixed]
    return faces, r[faces]


def residual_norm(system, residual, solver=None):
    """Energy norm of the residual functional's Riesz representative over
    the divergence-free fine velocity space (zero boundary flux).

    The representative solves the whole-domain mixed problem with the
    residual as velocity data; the divergence constraint removes the part of
    the residual carried by the coarse pressure, which no velocity
    enrichment can reduce.  Pass a prefactorized whole-domain ``solver`` to
    amortize repeated evaluations.
    """
    if solver is None:
        solver = mixed_fem.LocalSolver(
            system.grid, None, system.resist, weights=system.diag
        )
    g = residual[solver.free_faces]
    phi, _ = solver.solve(np.zeros(solver.cells.size), rhs_v=g)
    return float(np.sqrt(np.sum(solver.weights * phi * phi)))
