"""Independent brute-force reference implementations used only by tests.

Everything here is written as plain loops over cells and faces, assembled
dense, and solved with numpy least squares (the minimum-norm solution pins
pressure to zero mean per connected piece automatically), so none of the
production assembly or factorization paths are exercised.
"""

import numpy as np


def dense_face_weights(grid, kappa, lam):
    """Velocity mass weights accumulated cell by cell."""
    resist = 1.0 / (np.asarray(lam) * np.asarray(kappa))
    w = np.zeros(grid.num_faces)
    for c in range(grid.num_cells):
        for local in range(6):
            axis = local // 2
            f = grid.cell_faces[c, local]
            w[f] += 0.5 * grid.spacing[axis] * resist[c] * grid.face_area[f]
    return w


def dense_divergence_rows(grid, cells):
    """Rows of the divergence block for the given cells, dense over all
    faces, built face by face."""
    rows = np.zeros((len(cells), grid.num_faces))
    for r, c in enumerate(cells):
        for local in range(6):
            f = grid.cell_faces[c, local]
            sign = 1.0 if local % 2 else -1.0
            rows[r, f] = sign * grid.face_area[f]
    return rows


def dense_mixed_solve(grid, kappa, lam, source, fixed=None, cells=None):
    """Dense saddle solve on the whole grid or a cell subset.

    ``source`` is the rate density per cell; ``fixed`` maps face id to a
    prescribed +axis flux (every rim face of the region must either appear
    here or is taken as zero).  Returns full-length (v, p); pressure is
    zero-mean per connected sub-piece via the minimum-norm least squares
    solution.
    """
    if cells is None:
        cells = np.arange(grid.num_cells)
    cells = np.sort(np.asarray(cells))
    fixed = dict(fixed or {})
    member = np.zeros(grid.num_cells, dtype=bool)
    member[cells] = True

    local_faces = sorted(set(grid.cell_faces[cells].ravel().tolist()))
    free = []
    for f in local_faces:
        c0, c1 = grid.face_cells[f]
        inner = c0 >= 0 and c1 >= 0 and member[c0] and member[c1]
        if inner and f not in fixed:
            free.append(f)
        elif not inner:
            fixed.setdefault(f, 0.0)
    free = np.array(free, dtype=int)

    w = dense_face_weights(grid, kappa, lam)
    b_rows = dense_divergence_rows(grid, cells)
    src = np.broadcast_to(np.asarray(source, dtype=float), (grid.num_cells,))

    nf, nc = free.size, cells.size
    kkt = np.zeros((nf + nc, nf + nc))
    rhs = np.zeros(nf + nc)
    for i, f in enumerate(free):
        kkt[i, i] = w[f]
        kkt[i, nf:] = b_rows[:, f]
        kkt[nf:, i] = b_rows[:, f]
    for r in range(nc):
        rhs[nf + r] = src[cells[r]] * grid.cell_volume
        for f, val in fixed.items():
            rhs[nf + r] -= b_rows[r, f] * val
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    v = np.zeros(grid.num_faces)
    v[free] = sol[:nf]
    for f, val in fixed.items():
        v[f] = val
    p = np.zeros(grid.num_cells)
    p[cells] = sol[nf:]
    return v, p


def dense_generalized_eig(a, s):
    """Generalized symmetric eigenpairs via Cholesky whitening and the
    standard numpy eigensolver (ascending)."""
    ell = np.linalg.cholesky(s)
    inv_l = np.linalg.inv(ell)
    c = inv_l @ a @ inv_l.T
    c = 0.5 * (c + c.T)
    w, y = np.linalg.eigh(c)
    x = inv_l.T @ y
    return w, x


def dilate_cells(grid, cells, layers):
    """Brute-force dilation by whole cell layers in every axis: the union,
    over base cells, of the (2*layers+1)-cube around each, clipped to the
    domain."""
    nx, ny, nz = grid.dims
    member = np.zeros((nx, ny, nz), dtype=bool)
    for c in cells:
        i, j, k = (int(x) for x in np.array(grid.cell_ijk(int(c))))
        member[
            max(0, i - layers) : min(nx, i + layers + 1),
            max(0, j - layers) : min(ny, j + layers + 1),
            max(0, k - layers) : min(nz, k + layers + 1),
        ] = True
    out = [
        grid.cell_id(i, j, k)
        for k in range(nz)
        for j in range(ny)
        for i in range(nx)
        if member[i, j, k]
    ]
    return np.array(sorted(out))


def divergence_by_hand(grid, v):
    """Per-cell divergence via explicit signed sums."""
    div = np.zeros(grid.num_cells)
    for c in range(grid.num_cells):
        total = 0.0
        for local in range(6):
            f = grid.cell_faces[c, local]
            sign = 1.0 if local % 2 else -1.0
            total += sign * grid.face_area[f] * v[f]
        div[c] = total / grid.cell_volume
    return div


def spectral_forms_by_quadrature(partition, kappa, lam, snaps):
    """Edge and energy forms assembled term by term from the snapshot
    coefficients, independent of the production assembly."""
    grid = partition.grid
    resist = 1.0 / (np.asarray(lam) * np.asarray(kappa))
    j = snaps.values.shape[1]
    full = np.zeros((grid.num_faces, j))
    full[snaps.support_faces] = snaps.values

    a_i = np.zeros((j, j))
    for f in snaps.face_ids:
        c0, c1 = grid.face_cells[f]
        coef = 0.5 * (resist[c0] + resist[c1])
        for row in range(j):
            for col in range(j):
                a_i[row, col] += coef * grid.face_area[f] * full[f, row] * full[f, col]

    cells = partition.neighborhood_cells(snaps.edge)
    member = np.zeros(grid.num_cells, dtype=bool)
    member[cells] = True
    s_i = np.zeros((j, j))
    seen = set()
    for c in cells:
        for local in range(6):
            f = int(grid.cell_faces[c, local])
            if f in seen:
                continue
            seen.add(f)
            axis = local // 2
            weight = 0.0
            for nb in grid.face_cells[f]:
                if nb >= 0 and member[nb]:
                    weight += 0.5 * grid.spacing[axis] * resist[nb] * grid.face_area[f]
            for row in range(j):
                for col in range(j):
                    s_i[row, col] += weight * full[f, row] * full[f, col]
    div = np.zeros((len(cells), j))
    for r, c in enumerate(cells):
        for local in range(6):
            f = grid.cell_faces[c, local]
            sign = 1.0 if local % 2 else -1.0
            div[r] += sign * grid.face_area[f] * full[f] / grid.cell_volume
    s_i += grid.cell_volume * (div.T @ div)
    return a_i, s_i
