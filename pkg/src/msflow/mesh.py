"""Structured fine and coarse mesh topology.

The fine grid is a Cartesian box of ``nx x ny x nz`` cells.  Cells are
numbered x-fastest (i + nx*(j + ny*k)), matching the ordering of the
permeability files read by :mod:`msflow.fields_io`.  Faces are numbered
per axis (all x-normal faces first, then y, then z), x-fastest within
each axis, and every face carries the +axis unit normal.  Whether a flux
through a face is an in- or outflow of a cell is decided by which side
of the face the cell sits on, never by a per-face sign table.
"""

from dataclasses import dataclass, field

import numpy as np

AXES = (0, 1, 2)


@dataclass
class FineGrid:
    """Cartesian fine mesh with cached face/cell index topology."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.spacing = tuple(float(h) for h in self.spacing)
        if any(d < 1 for d in self.dims):
            raise ValueError(f"cell counts must be positive, got {self.dims}")
        if any(h <= 0 for h in self.spacing):
            raise ValueError(f"spacings must be positive, got {self.spacing}")
        nx, ny, nz = self.dims
        self.num_cells = nx * ny * nz
        self.cell_volume = self.spacing[0] * self.spacing[1] * self.spacing[2]
        # per-axis face counts and offsets into the global face numbering
        self.face_counts = (
            (nx + 1) * ny * nz,
            nx * (ny + 1) * nz,
            nx * ny * (nz + 1),
        )
        self.face_offsets = (
            0,
            self.face_counts[0],
            self.face_counts[0] + self.face_counts[1],
        )
        self.num_faces = sum(self.face_counts)
        areas = (
            self.spacing[1] * self.spacing[2],
            self.spacing[0] * self.spacing[2],
            self.spacing[0] * self.spacing[1],
        )
        self.axis_area = areas
        self._build_topology()

    def _build_topology(self):
        nx, ny, nz = self.dims
        face_axis = np.empty(self.num_faces, dtype=np.int8)
        face_area = np.empty(self.num_faces, dtype=float)
        # face_cells[f] = (cell on the -axis side, cell on the +axis side), -1 outside
        face_cells = np.full((self.num_faces, 2), -1, dtype=np.int64)
        for axis in AXES:
            lo, count = self.face_offsets[axis], self.face_counts[axis]
            face_axis[lo : lo + count] = axis
            face_area[lo : lo + count] = self.axis_area[axis]
            shape = [nx, ny, nz]
            shape[axis] += 1
            f = np.arange(count)
            i = f % shape[0]
            j = (f // shape[0]) % shape[1]
            k = f // (shape[0] * shape[1])
            ijk = [i, j, k]
            low = [c.copy() for c in ijk]
            low[axis] -= 1
            high = ijk
            low_ok = low[axis] >= 0
            high_ok = high[axis] <= self.dims[axis] - 1
            low_id = low[0] + nx * (low[1] + ny * low[2])
            high_id = high[0] + nx * (high[1] + ny * high[2])
            face_cells[lo : lo + count, 0] = np.where(low_ok, low_id, -1)
            face_cells[lo : lo + count, 1] = np.where(high_ok, high_id, -1)
        self.face_axis = face_axis
        self.face_area = face_area
        self.face_cells = face_cells
        self.interior_face_mask = (face_cells >= 0).all(axis=1)
        self.interior_faces = np.flatnonzero(self.interior_face_mask)
        self.boundary_faces = np.flatnonzero(~self.interior_face_mask)

        # cell_faces[c] = (xlo, xhi, ylo, yhi, zlo, zhi)
        c = np.arange(self.num_cells)
        i = c % nx
        j = (c // nx) % ny
        k = c // (nx * ny)
        cell_faces = np.empty((self.num_cells, 6), dtype=np.int64)
        cell_faces[:, 0] = self.face_id(0, i, j, k)
        cell_faces[:, 1] = self.face_id(0, i + 1, j, k)
        cell_faces[:, 2] = self.face_id(1, i, j, k)
        cell_faces[:, 3] = self.face_id(1, i, j + 1, k)
        cell_faces[:, 4] = self.face_id(2, i, j, k)
        cell_faces[:, 5] = self.face_id(2, i, j, k + 1)
        self.cell_faces = cell_faces
        # +1 where the face is on the cell's high side (outward normal = +axis)
        self.cell_face_signs = np.tile(
            np.array([-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]), (self.num_cells, 1)
        )
        self._div_matrix = None

    def cell_id(self, i, j, k):
        nx, ny, _ = self.dims
        return i + nx * (j + ny * k)

    def cell_ijk(self, cid):
        nx, ny, _ = self.dims
        cid = np.asarray(cid)
        return cid % nx, (cid // nx) % ny, cid // (nx * ny)

    def face_id(self, axis, i, j, k):
        """Global id of the axis-normal face at grid position (i, j, k).

        The index along ``axis`` ranges over 0..dims[axis] (one extra plane);
        the tangential indices range over the cell counts.
        """
        shape = [self.dims[0], self.dims[1], self.dims[2]]
        shape[axis] += 1
        return self.face_offsets[axis] + i + shape[0] * (j + shape[1] * k)

    def face_is_boundary(self, fid):
        return ~self.interior_face_mask[np.asarray(fid)]

    def cells_in_box(self, lo, hi):
        """All cell ids inside the half-open box [lo, hi), x-fastest order."""
        nx, ny, _ = self.dims
        ii = np.arange(lo[0], hi[0])
        jj = np.arange(lo[1], hi[1])
        kk = np.arange(lo[2], hi[2])
        i, j, k = np.meshgrid(ii, jj, kk, indexing="ij")
        ids = i + nx * (j + ny * k)
        return np.sort(ids.ravel())

    def divergence_matrix(self):
        """Sparse B with B[c, f] = +-area(f): the exact per-cell divergence
        theorem (flux integral out of the cell).  Cached."""
        if self._div_matrix is None:
            from scipy import sparse

            rows = np.repeat(np.arange(self.num_cells), 6)
            cols = self.cell_faces.ravel()
            vals = (self.cell_face_signs * self.face_area[self.cell_faces]).ravel()
            self._div_matrix = sparse.csr_matrix(
                (vals, (rows, cols)), shape=(self.num_cells, self.num_faces)
            )
        return self._div_matrix


@dataclass
class CoarsePartition:
    """Partition of a :class:`FineGrid` into boxes of fine cells.

    Coarse blocks are numbered x-fastest like fine cells.  Interior coarse
    faces (edges) are numbered axis by axis; edge i keeps its +axis unit
    normal, the two blocks sharing it, and the fine faces tiling it.
    """

    grid: FineGrid
    factors: tuple[int, int, int]
    block_dims: tuple[int, int, int] = field(init=False)
    num_blocks: int = field(init=False)
    num_edges: int = field(init=False)

    def __post_init__(self):
        self.factors = tuple(int(f) for f in self.factors)
        for axis in AXES:
            if self.factors[axis] < 1:
                raise ValueError(f"coarsening factor on axis {axis} must be >= 1")
            if self.grid.dims[axis] % self.factors[axis] != 0:
                raise ValueError(
                    f"coarsening factor {self.factors[axis]} does not divide the "
                    f"{'xyz'[axis]}-axis cell count {self.grid.dims[axis]}"
                )
        self.block_dims = tuple(
            self.grid.dims[a] // self.factors[a] for a in AXES
        )
        self.num_blocks = int(np.prod(self.block_dims))
        self._build_blocks()
        self._build_edges()

    def _build_blocks(self):
        nx, ny, _ = self.grid.dims
        fx, fy, fz = self.factors
        bx, by, _ = self.block_dims
        c = np.arange(self.grid.num_cells)
        i = c % nx
        j = (c // nx) % ny
        k = c // (nx * ny)
        self.block_of_cell = (i // fx) + bx * ((j // fy) + by * (k // fz))
        self.cells_per_block = fx * fy * fz
        self.block_volume = self.cells_per_block * self.grid.cell_volume

    def _build_edges(self):
        bx, by, bz = self.block_dims
        edge_axis = []
        edge_blocks = []
        edge_faces = []
        per_axis = (
            (bx - 1) * by * bz,
            bx * (by - 1) * bz,
            bx * by * (bz - 1),
        )
        for axis in AXES:
            planes = self.block_dims[axis] - 1
            if planes <= 0:
                continue
            t1, t2 = [a for a in AXES if a != axis]
            for k2 in range(self.block_dims[t2]):
                for k1 in range(self.block_dims[t1]):
                    for plane in range(1, planes + 1):
                        bidx = [0, 0, 0]
                        bidx[t1], bidx[t2] = k1, k2
                        bidx[axis] = plane - 1
                        low = bidx[0] + bx * (bidx[1] + by * bidx[2])
                        bidx[axis] = plane
                        high = bidx[0] + bx * (bidx[1] + by * bidx[2])
                        edge_axis.append(axis)
                        edge_blocks.append((low, high))
                        edge_faces.append(self._edge_fine_faces(axis, plane, k1, k2))
        self.edge_axis = np.array(edge_axis, dtype=np.int8)
        self.edge_blocks = np.array(edge_blocks, dtype=np.int64).reshape(-1, 2)
        self.edge_faces = edge_faces
        self.num_edges = len(edge_faces)
        self.edges_per_axis = per_axis

    def _edge_fine_faces(self, axis, plane, k1, k2):
        """Fine faces on the coarse interface plane, first tangential axis
        fastest."""
        t1, t2 = [a for a in AXES if a != axis]
        pos = plane * self.factors[axis]
        r1 = np.arange(k1 * self.factors[t1], (k1 + 1) * self.factors[t1])
        r2 = np.arange(k2 * self.factors[t2], (k2 + 1) * self.factors[t2])
        a2, a1 = np.meshgrid(r2, r1, indexing="ij")
        idx = [None, None, None]
        idx[axis] = np.full(a1.size, pos)
        idx[t1] = a1.ravel()
        idx[t2] = a2.ravel()
        return self.grid.face_id(axis, idx[0], idx[1], idx[2])

    def block_box(self, b):
        bx, by, _ = self.block_dims
        bi = b % bx
        bj = (b // bx) % by
        bk = b // (bx * by)
        lo = (bi * self.factors[0], bj * self.factors[1], bk * self.factors[2])
        hi = (lo[0] + self.factors[0], lo[1] + self.factors[1], lo[2] + self.factors[2])
        return lo, hi

    def block_cells(self, b):
        return self.grid.cells_in_box(*self.block_box(b))

    def neighborhood_cells(self, edge):
        """Fine cells of the two blocks sharing coarse edge ``edge``."""
        lo_b, hi_b = self.edge_blocks[edge]
        return np.concatenate([self.block_cells(lo_b), self.block_cells(hi_b)])

    def neighborhood_box(self, edge):
        lo_b, hi_b = self.edge_blocks[edge]
        lo0, hi0 = self.block_box(lo_b)
        lo1, hi1 = self.block_box(hi_b)
        lo = tuple(min(a, b) for a, b in zip(lo0, lo1))
        hi = tuple(max(a, b) for a, b in zip(hi0, hi1))
        return lo, hi

    def edge_tangential_count(self, edge):
        """Number of fine faces on the edge (n^2 for isotropic factors)."""
        axis = int(self.edge_axis[edge])
        t1, t2 = [a for a in AXES if a != axis]
        return self.factors[t1] * self.factors[t2]

    def edge_area(self, edge):
        return self.edge_tangential_count(edge) * self.grid.axis_area[
            int(self.edge_axis[edge])
        ]


@dataclass
class OversampledNeighborhood:
    """An edge neighborhood grown by whole fine-cell layers, clipped to D."""

    edge: int
    layers: int
    lo: tuple[int, int, int]
    hi: tuple[int, int, int]
    cells: np.ndarray
    grid: FineGrid

    def contains_mask(self):
        mask = np.zeros(self.grid.num_cells, dtype=bool)
        mask[self.cells] = True
        return mask

    def boundary_faces(self):
        """Faces with exactly one adjacent cell inside the neighborhood,
        with the sign of the outward normal relative to the +axis face
        normal (+1 when outward = +axis)."""
        mask = self.contains_mask()
        fc = self.grid.face_cells
        low_in = (fc[:, 0] >= 0) & mask[np.clip(fc[:, 0], 0, None)]
        high_in = (fc[:, 1] >= 0) & mask[np.clip(fc[:, 1], 0, None)]
        on_rim = low_in ^ high_in
        fids = np.flatnonzero(on_rim)
        outward = np.where(low_in[fids], 1.0, -1.0)
        return fids, outward


def build_coarse_partition(grid, factor):
    """Partition ``grid`` into coarse blocks of ``factor`` fine cells per axis.

    ``factor`` may be a single integer (isotropic) or one per axis; each must
    divide the corresponding fine cell count exactly.
    """
    if np.isscalar(factor):
        factor = (factor, factor, factor)
    return CoarsePartition(grid, tuple(factor))


def oversample(partition, edge, layers):
    """Grow the neighborhood of ``edge`` by ``layers`` fine-cell layers in
    every axis direction, clipped at the domain boundary."""
    if not 0 <= edge < partition.num_edges:
        raise ValueError(f"unknown coarse edge id {edge}")
    if layers < 0:
        raise ValueError("layer count must be non-negative")
    lo, hi = partition.neighborhood_box(edge)
    lo = tuple(max(0, l - layers) for l in lo)
    hi = tuple(min(d, h + layers) for h, d in zip(hi, partition.grid.dims))
    cells = partition.grid.cells_in_box(lo, hi)
    return OversampledNeighborhood(edge, layers, lo, hi, cells, partition.grid)


def default_oversample_layers(partition):
    return min(partition.factors) // 2


def faces_on_coarse_edge(partition, edge):
    """Ordered fine face ids tiling coarse edge ``edge``."""
    if not 0 <= edge < partition.num_edges:
        raise ValueError(f"unknown coarse edge id {edge}")
    return partition.edge_faces[edge]


def fine_dof(grid):
    """Unknown count of the fine mixed system: cells + interior faces."""
    return grid.num_cells + len(grid.interior_faces)


def coarse_dof(partition, per_edge=1):
    """Unknown count of a reduced system with ``per_edge`` velocity basis
    functions on every interior coarse edge."""
    return partition.num_blocks + per_edge * partition.num_edges
