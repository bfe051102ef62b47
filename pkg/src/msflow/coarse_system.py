"""Reduced saddle-point systems over multiscale velocity spaces.

The coarse velocity block is the exact triple product of the basis
prolongation with the current fine mass block; the coarse pressure space is
piecewise constant per coarse block.  Basis coefficients are frozen after
construction, only the mobility-dependent products are reassembled.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

GUARD_TOL = 1e-10
COARSE_RESIDUAL_TOL = 1e-10
DENSE_COARSE_LIMIT = 1500


class RankDeficiencyError(RuntimeError):
    def __init__(self, edges, residual=None):
        detail = f" (residual {residual:.3e})" if residual is not None else ""
        super().__init__(
            "reduced velocity block is rank deficient; near-dependent basis "
            f"columns on edges {sorted(edges)}{detail}"
        )
        self.edges = tuple(sorted(edges))


@dataclass
class CoarseOperator:
    """Velocity and pressure prolongations for one multiscale space.

    ``V`` maps kept coarse velocity coefficients to fine-face coefficients,
    ``P`` maps coarse block pressures to fine cells (disjoint indicators).
    Columns judged linearly dependent against earlier columns of the same
    edge (post-orthogonalization norm below ``GUARD_TOL`` of the original)
    are dropped and reported.
    """

    space: object
    V: sparse.csc_matrix
    P: sparse.csc_matrix
    col_edges: np.ndarray
    kept: np.ndarray
    dropped: tuple

    @property
    def dim(self):
        return self.V.shape[1] + self.P.shape[1]


def pressure_prolongation(partition):
    grid = partition.grid
    return sparse.csc_matrix(
        (
            np.ones(grid.num_cells),
            (np.arange(grid.num_cells), partition.block_of_cell),
        ),
        shape=(grid.num_cells, partition.num_blocks),
    )


def build_operator(space, guard_tol=GUARD_TOL):
    """Freeze a space into prolongation matrices, dropping near-dependent
    columns per edge."""
    coeffs = space.coeffs
    kept = []
    dropped = []
    per_edge = {}
    for edge in np.unique(space.edge_ids):
        per_edge[edge] = np.flatnonzero(space.edge_ids == edge)
    for edge, cols in per_edge.items():
        sub = coeffs[:, cols]
        support = np.unique(sub.indices)
        dense = np.zeros((support.size, cols.size))
        sub_csc = sub.tocsc()
        for k in range(cols.size):
            lo, hi = sub_csc.indptr[k], sub_csc.indptr[k + 1]
            dense[np.searchsorted(support, sub_csc.indices[lo:hi]), k] = \
                sub_csc.data[lo:hi]
        basis = []
        for k in range(cols.size):
            x = dense[:, k].copy()
            orig = np.linalg.norm(x)
            for q in basis:
                x -= (q @ x) * q
            if orig == 0.0 or np.linalg.norm(x) <= guard_tol * orig:
                dropped.append((int(edge), int(cols[k])))
                continue
            basis.append(x / np.linalg.norm(x))
            kept.append(int(cols[k]))
    kept = np.array(sorted(kept), dtype=np.int64)
    return CoarseOperator(
        space,
        coeffs[:, kept].tocsc(),
        pressure_prolongation(space.partition),
        space.edge_ids[kept],
        kept,
        tuple(dropped),
    )


@dataclass
class ReducedSystem:
    Ac: np.ndarray
    Bc: np.ndarray
    rhs_p: np.ndarray
    op: CoarseOperator


def assemble_coarse(op, system):
    """Exact triple products of the prolongations with the current fine
    blocks: Ac = V^T A V, Bc = P^T B V, rhs = P^T (F - B g_lift)."""
    if isinstance(op, ReducedSystem):
        raise TypeError("pass a CoarseOperator, not a ReducedSystem")
    diag = sparse.diags(system.diag)
    Ac = (op.V.T @ (diag @ op.V)).tocsr()
    Bc = (op.P.T @ (system.B @ op.V)).tocsr()
    lift = np.zeros(system.grid.num_faces)
    lift[system.fixed_faces] = system.fixed_values
    rhs_p = op.P.T @ (system.rhs_p - system.B @ lift)
    return ReducedSystem(Ac, Bc, rhs_p, op)


def solve_coarse(red):
    """Solve the reduced saddle system with the coarse pressure pinned to
    zero mean.  Verifies the algebraic residual of both blocks."""
    m = red.Ac.shape[0]
    ne = red.Bc.shape[0]
    ones = np.ones(ne)
    rhs = np.concatenate([np.zeros(m), red.rhs_p, [0.0]])
    if m + ne + 1 <= DENSE_COARSE_LIMIT:
        kkt = np.zeros((m + ne + 1, m + ne + 1))
        kkt[:m, :m] = red.Ac.toarray()
        kkt[:m, m : m + ne] = red.Bc.T.toarray()
        kkt[m : m + ne, :m] = red.Bc.toarray()
        kkt[m : m + ne, -1] = ones
        kkt[-1, m : m + ne] = ones
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            raise _rank_failure(red, None)
    else:
        kkt = sparse.bmat(
            [
                [red.Ac, red.Bc.T, None],
                [red.Bc, None, ones[:, None]],
                [None, ones[None, :], None],
            ],
            format="csc",
        )
        sol = spsolve(kkt, rhs)
    vc, pc = sol[:m], sol[m : m + ne]
    scale = max(float(np.linalg.norm(red.rhs_p)), 1e-30)
    res_v = np.linalg.norm(red.Ac @ vc + red.Bc.T @ pc) / scale
    res_p = np.linalg.norm(red.Bc @ vc - red.rhs_p) / scale
    residual = max(res_v, res_p)
    if not np.isfinite(residual) or residual > COARSE_RESIDUAL_TOL:
        raise _rank_failure(red, residual)
    return vc, pc


def _rank_failure(red, residual):
    suspects = set()
    op = red.op
    for edge in np.unique(op.col_edges):
        cols = np.flatnonzero(op.col_edges == edge)
        if cols.size < 2:
            continue
        gram = (op.V[:, cols].T @ op.V[:, cols]).toarray()
        norms = np.sqrt(np.diag(gram))
        gram /= np.outer(norms, norms)
        if np.linalg.eigvalsh(gram)[0] < 1e-10:
            suspects.add(int(edge))
    return RankDeficiencyError(suspects or {-1}, residual)


def downscale(op, vc, pc, system):
    """Project coarse coefficients to fine-grid fields.  The velocity picks
    up the prescribed boundary fluxes; the pressure is blockwise constant."""
    v = op.V @ vc
    v[system.fixed_faces] = system.fixed_values
    p = op.P @ pc
    return v, p


def solve_multiscale(space_or_op, system, guard_tol=GUARD_TOL):
    """Assemble, solve and downscale in one call.  Accepts a space (operator
    built on the fly) or a prebuilt operator."""
    op = space_or_op
    if not isinstance(op, CoarseOperator):
        op = build_operator(op, guard_tol)
    red = assemble_coarse(op, system)
    vc, pc = solve_coarse(red)
    v, p = downscale(op, vc, pc, system)
    return v, p, vc, pc
