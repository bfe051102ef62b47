"""Fine-scale mixed velocity-pressure solver on structured grids.

Lowest-order face elements with lumped (midpoint) quadrature: the velocity
mass block is diagonal, one weight per face, so eliminating the velocity
turns every solve into a symmetric positive definite cell-pressure system.
The same machinery solves the global problem and any cell-subset problem
with prescribed normal fluxes; all basis constructions reuse it.

Face unknowns are normal flux densities in the +axis orientation.  Systems
are pure Neumann: pressure is pinned to zero mean per connected component.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

RESIDUAL_TOL = 1e-10
COMPAT_TOL = 1e-10
DENSE_CELL_LIMIT = 1200
DIRECT_CELL_LIMIT = 120_000


def _membership(sorted_ids, query):
    """(mask, position) of each query id within a sorted id array."""
    if sorted_ids.size == 0:
        return np.zeros(query.size, dtype=bool), np.zeros(query.size, dtype=np.int64)
    pos = np.clip(np.searchsorted(sorted_ids, query), 0, sorted_ids.size - 1)
    return sorted_ids[pos] == query, pos


class IncompatibleSourceError(ValueError):
    """Neumann data and sources do not balance on a connected sub-piece."""

    def __init__(self, imbalance, ncells):
        super().__init__(
            f"incompatible flux data: net imbalance {imbalance:.3e} on a "
            f"{ncells}-cell component"
        )
        self.imbalance = imbalance


class SolveFailure(RuntimeError):
    def __init__(self, residual):
        super().__init__(f"pressure solve stalled at relative residual {residual:.3e}")
        self.residual = residual


class _GroundedLU:
    """Direct fallback for a singular component: ground the first cell,
    factorize the rest."""

    def __init__(self, sub):
        self.lu = splu(sub[1:, 1:].tocsc(), permc_spec="MMD_AT_PLUS_A")

    def solve(self, b, **_):
        return np.concatenate([[0.0], self.lu.solve(b[1:])])


def face_weights(grid, resist, cells_mask=None):
    """Lumped velocity mass weights: per face, area times the sum of the two
    adjacent half-cell resistivities (one term at the domain boundary).

    ``resist`` holds (lam*kappa)^-1 per cell.  With ``cells_mask`` only the
    masked cells contribute (used for neighborhood-restricted forms).
    """
    fc = grid.face_cells
    half = 0.5 * np.array(grid.spacing)[grid.face_axis]
    w = np.zeros(grid.num_faces)
    for side in (0, 1):
        c = fc[:, side]
        ok = c >= 0
        if cells_mask is not None:
            ok = ok & cells_mask[np.clip(c, 0, None)]
        w[ok] += half[ok] * resist[c[ok]]
    return w * grid.face_area


@dataclass
class SaddleSystem:
    """Assembled fine-scale mixed system.

    ``diag`` is the lumped velocity mass block A (one entry per face), the
    divergence block B lives on the grid, ``rhs_p`` holds the cell source
    integrals, and the essential-flux constraint list pins every boundary
    face to its prescribed +axis-oriented flux.
    """

    grid: object
    diag: np.ndarray
    rhs_p: np.ndarray
    fixed_faces: np.ndarray
    fixed_values: np.ndarray
    resist: np.ndarray

    @property
    def B(self):
        return self.grid.divergence_matrix()


def assemble(grid, kappa, lam, source, boundary_flux=None):
    """Build the global mixed system for mobility-weighted Darcy flow.

    ``kappa`` and ``lam`` are per-cell positive arrays, ``source`` the cell
    rate density f (scalar or per cell), ``boundary_flux`` an optional
    mapping face id -> outward normal flux g on boundary faces (zero where
    omitted).
    """
    kappa = np.asarray(kappa, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (grid.num_cells,))
    if kappa.shape != (grid.num_cells,):
        raise ValueError(
            f"kappa has {kappa.size} entries for a {grid.num_cells}-cell grid"
        )
    if lam.shape != (grid.num_cells,):
        raise ValueError(
            f"mobility has {lam.size} entries for a {grid.num_cells}-cell grid"
        )
    if np.any(kappa <= 0) or np.any(lam <= 0):
        raise ValueError("kappa and mobility must be strictly positive")
    resist = 1.0 / (lam * kappa)
    diag = face_weights(grid, resist)
    rhs_p = np.broadcast_to(np.asarray(source, dtype=float), (grid.num_cells,)) \
        * grid.cell_volume
    fixed = grid.boundary_faces
    values = np.zeros(fixed.size)
    if boundary_flux:
        fc = grid.face_cells
        for fid, g_out in boundary_flux.items():
            pos = np.searchsorted(fixed, fid)
            if pos >= fixed.size or fixed[pos] != fid:
                raise ValueError(f"face {fid} is not a boundary face")
            # outward normal is -axis on the low boundary, +axis on the high
            values[pos] = g_out if fc[fid, 0] >= 0 else -g_out
    return SaddleSystem(grid, diag, rhs_p.copy(), fixed, values, resist)


class LocalSolver:
    """Factorized mixed solver on a cell subset, reusable across right-hand
    sides.

    Free unknowns are the fluxes on faces interior to the region; every rim
    face (one adjacent cell inside) is an essential flux, as are any faces
    listed in ``extra_fixed`` (used to prescribe traces on interior coarse
    edges).  Each call to :meth:`solve` supplies the per-cell source
    integrals and the prescribed values.
    """

    def __init__(self, grid, cells, resist, extra_fixed=None, weights=None):
        self.grid = grid
        if cells is None:
            cells = np.arange(grid.num_cells)
        self.cells = np.sort(np.asarray(cells, dtype=np.int64))
        if self.cells.size == 0:
            raise ValueError("empty region")
        if self.cells[0] < 0 or self.cells[-1] >= grid.num_cells:
            raise ValueError("region cells outside the grid")

        local_faces = np.unique(grid.cell_faces[self.cells])
        fc = grid.face_cells[local_faces]
        inside = np.zeros((local_faces.size, 2), dtype=bool)
        for side in (0, 1):
            c = fc[:, side]
            ok = c >= 0
            hit, _ = _membership(self.cells, c[ok])
            inside[ok, side] = hit
        inner = inside.all(axis=1)
        if extra_fixed is not None and len(extra_fixed):
            extra = np.asarray(list(extra_fixed), dtype=np.int64)
            inner &= ~np.isin(local_faces, extra)
        self.free_faces = local_faces[inner]
        self.fixed_faces = local_faces[~inner]

        if weights is None:
            weights = face_weights(grid, resist)
        self.weights = weights[self.free_faces]

        # local divergence blocks, rows = region cells in sorted order
        rows = np.repeat(np.arange(self.cells.size), 6)
        cols = grid.cell_faces[self.cells].ravel()
        vals = (
            grid.cell_face_signs[self.cells]
            * grid.face_area[grid.cell_faces[self.cells]]
        ).ravel()
        is_free, free_pos = _membership(self.free_faces, cols)
        is_fixed, fixed_pos = _membership(self.fixed_faces, cols)
        n = self.cells.size
        self.Bf = sparse.csr_matrix(
            (vals[is_free], (rows[is_free], free_pos[is_free])),
            shape=(n, self.free_faces.size),
        )
        self.Bx = sparse.csr_matrix(
            (vals[is_fixed], (rows[is_fixed], fixed_pos[is_fixed])),
            shape=(n, self.fixed_faces.size),
        )

        inv_w = sparse.diags(1.0 / self.weights) if self.weights.size else None
        if inv_w is not None:
            self.S = (self.Bf @ inv_w @ self.Bf.T).tocsr()
        else:
            self.S = sparse.csr_matrix((n, n))
        ncomp, labels = csgraph.connected_components(self.S, directed=False)
        self.components = [np.flatnonzero(labels == c) for c in range(ncomp)]
        self._factors = [self._factorize(idx) for idx in self.components]

    def _factorize(self, idx):
        if idx.size <= 1:
            return ("trivial", None)
        if idx.size <= DENSE_CELL_LIMIT:
            sub = self.S[idx[1:]][:, idx[1:]]
            return ("dense", cho_factor(sub.toarray(), lower=True))
        if idx.size <= DIRECT_CELL_LIMIT:
            return ("lu", _GroundedLU(self.S[idx][:, idx]))
        # beyond direct reach: classical AMG on the full singular component
        # (grounding would wreck the conditioning), direct as last resort
        import pyamg

        sub = self.S[idx][:, idx].tocsr()
        smoother = ("gauss_seidel", {"sweep": "symmetric", "iterations": 2})
        ml = pyamg.ruge_stuben_solver(
            sub, CF="PMIS", presmoother=smoother, postsmoother=smoother
        )
        return ("amg", [sub, ml])

    def fixed_positions(self, face_ids):
        """Positions of ``face_ids`` within this solver's fixed-face list."""
        pos = np.searchsorted(self.fixed_faces, face_ids)
        if np.any(pos >= self.fixed_faces.size) or np.any(
            self.fixed_faces[np.clip(pos, 0, self.fixed_faces.size - 1)] != face_ids
        ):
            raise ValueError("face ids are not fixed faces of this region")
        return pos

    def solve(self, source_int, fixed_values=None, rhs_v=None):
        """Solve for (flux on free faces, pressure on region cells).

        ``source_int`` holds the divergence integral per region cell
        (ordering matches ``self.cells``); ``fixed_values`` the prescribed
        +axis fluxes aligned with ``self.fixed_faces`` (zero if omitted);
        ``rhs_v`` optional velocity-block data aligned with
        ``self.free_faces`` (Riesz solves pass the residual here).
        Pressure comes back zero-mean per connected sub-piece.
        """
        source_int = np.asarray(source_int, dtype=float)
        if fixed_values is None:
            fixed_values = np.zeros(self.fixed_faces.size)
        data_rhs = self.Bx @ fixed_values - source_int
        rhs = data_rhs
        scale = max(
            float(np.abs(source_int).sum() + np.abs(self.Bx @ fixed_values).sum()),
            1e-30,
        )
        if rhs_v is not None:
            g_over_w = rhs_v / self.weights
            rhs = data_rhs + self.Bf @ g_over_w
            scale = max(scale, float(np.abs(self.Bf @ g_over_w).sum()))
        p = np.zeros(self.cells.size)
        for idx, (kind, fac) in zip(self.components, self._factors):
            imbalance = float(data_rhs[idx].sum())
            if abs(imbalance) > COMPAT_TOL * scale:
                raise IncompatibleSourceError(imbalance, idx.size)
            if kind == "trivial":
                continue
            if kind == "dense":
                p[idx[1:]] = cho_solve(fac, rhs[idx[1:]])
            elif kind == "lu":
                p[idx] = fac.solve(rhs[idx])
            else:
                sub, solver = fac
                b = rhs[idx] - rhs[idx].mean()
                x = solver.solve(b, tol=1e-13, accel="cg", maxiter=300)
                if np.linalg.norm(sub @ x - b) > 1e-11 * max(
                    np.linalg.norm(b), 1e-30
                ):
                    # AMG stalled on this field; switch to a direct factor
                    fac[1] = _GroundedLU(sub)
                    x = fac[1].solve(b)
                p[idx] = x
            p[idx] -= p[idx].mean()
        if self.weights.size:
            v_free = -(self.Bf.T @ p) / self.weights
            if rhs_v is not None:
                v_free += g_over_w
        else:
            v_free = np.zeros(0)
        res = self.Bf @ v_free + self.Bx @ fixed_values - source_int
        rel = float(np.linalg.norm(res)) / scale
        if rel > RESIDUAL_TOL:
            raise SolveFailure(rel)
        return v_free, p

    def scatter(self, v_free, fixed_values=None):
        """Embed a local solution into a full-length flux array (faces
        outside the region stay zero)."""
        v = np.zeros(self.grid.num_faces)
        v[self.free_faces] = v_free
        if fixed_values is not None:
            v[self.fixed_faces] = fixed_values
        return v


def solve(system):
    """Solve the assembled global system.  Returns the face flux field and
    the zero-mean cell pressure."""
    solver = LocalSolver(system.grid, None, system.resist)
    fixed_values = np.zeros(solver.fixed_faces.size)
    pos = solver.fixed_positions(system.fixed_faces)
    fixed_values[pos] = system.fixed_values
    v_free, p = solver.solve(system.rhs_p, fixed_values)
    v = solver.scatter(v_free, fixed_values)
    return v, p


def solve_local(grid, cells, kappa, lam, source, fixed_flux=None):
    """One-shot mixed solve on a cell subset.

    ``source`` is the rate density per cell (full-length array or scalar);
    ``fixed_flux`` maps face ids to prescribed +axis fluxes on rim faces
    and/or designated interior faces (rim faces not listed get zero flux).
    Returns full-length (flux, pressure) arrays, zero outside the region.
    """
    kappa = np.asarray(kappa, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (grid.num_cells,))
    resist = 1.0 / (lam * kappa)
    fixed_flux = fixed_flux or {}
    cells = np.sort(np.asarray(cells, dtype=np.int64))
    inner_fixed = [f for f in fixed_flux if grid.interior_face_mask[f]]
    solver = LocalSolver(grid, cells, resist, extra_fixed=inner_fixed)
    fixed_values = np.zeros(solver.fixed_faces.size)
    if fixed_flux:
        ids = np.fromiter(fixed_flux.keys(), dtype=np.int64)
        vals = np.fromiter((fixed_flux[f] for f in ids), dtype=float)
        fixed_values[solver.fixed_positions(ids)] = vals
    src = np.broadcast_to(np.asarray(source, dtype=float), (grid.num_cells,))
    v_free, p_local = solver.solve(src[cells] * grid.cell_volume, fixed_values)
    v = solver.scatter(v_free, fixed_values)
    p = np.zeros(grid.num_cells)
    p[cells] = p_local
    return v, p


def divergence(grid, v):
    """Per-cell divergence of a face flux field: signed flux sum over the
    cell boundary divided by the cell volume."""
    return (grid.divergence_matrix() @ v) / grid.cell_volume
