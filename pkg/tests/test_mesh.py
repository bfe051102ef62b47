import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msflow import mesh

from oracles import dilate_cells


class TestFineGrid:
    def test_face_counts(self):
        g = mesh.FineGrid((4, 3, 2))
        assert g.face_counts == (5 * 3 * 2, 4 * 4 * 2, 4 * 3 * 3)
        for axis, expect in enumerate([3 * 3 * 2, 4 * 2 * 2, 4 * 3 * 1]):
            got = (g.face_axis[g.interior_faces] == axis).sum()
            assert got == expect

    def test_every_face_joins_one_or_two_cells(self):
        g = mesh.FineGrid((3, 2, 2))
        counts = (g.face_cells >= 0).sum(axis=1)
        assert set(counts[g.interior_faces]) == {2}
        assert set(counts[g.boundary_faces]) == {1}

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            mesh.FineGrid((0, 2, 2))
        with pytest.raises(ValueError):
            mesh.FineGrid((2, 2, 2), (1.0, -1.0, 1.0))

    def test_cell_indexing_roundtrip(self):
        g = mesh.FineGrid((4, 5, 3))
        ids = np.arange(g.num_cells)
        i, j, k = g.cell_ijk(ids)
        assert np.array_equal(g.cell_id(i, j, k), ids)


class TestCoarsePartition:
    def test_benchmark_mesh_n20(self):
        g = mesh.FineGrid((220, 60, 80))
        part = mesh.build_coarse_partition(g, 20)
        assert part.num_blocks == 132
        assert part.edges_per_axis == (120, 88, 99)
        assert part.num_edges == 307
        assert mesh.coarse_dof(part) == 439

    def test_benchmark_mesh_n10(self):
        g = mesh.FineGrid((220, 60, 80))
        part = mesh.build_coarse_partition(g, 10)
        assert part.num_blocks == 1056
        assert part.num_edges == 2812
        assert mesh.coarse_dof(part) == 3868

    def test_benchmark_fine_dof(self):
        g = mesh.FineGrid((220, 60, 80))
        assert g.num_cells == 1_056_000
        assert len(g.interior_faces) == 3_132_400
        assert mesh.fine_dof(g) == 4_188_400

    def test_smallest_nondegenerate_partition(self):
        g = mesh.FineGrid((2, 1, 1))
        part = mesh.build_coarse_partition(g, 1)
        assert part.num_blocks == 2
        assert part.num_edges == 1
        assert tuple(part.edge_blocks[0]) == (0, 1)

    def test_nondivisible_factor_names_axis(self):
        g = mesh.FineGrid((8, 9, 8))
        with pytest.raises(ValueError, match="y-axis"):
            mesh.build_coarse_partition(g, 4)

    def test_blocks_have_factor_cubed_cells(self):
        g = mesh.FineGrid((8, 8, 8))
        part = mesh.build_coarse_partition(g, 4)
        for b in range(part.num_blocks):
            assert part.block_cells(b).size == 64

    def test_neighborhood_is_the_two_sharing_blocks(self):
        g = mesh.FineGrid((8, 8, 8))
        part = mesh.build_coarse_partition(g, 4)
        for e in range(part.num_edges):
            lo, hi = part.edge_blocks[e]
            cells = part.neighborhood_cells(e)
            assert cells.size == 2 * part.cells_per_block
            assert set(part.block_of_cell[cells]) == {lo, hi}


class TestEdgeFaces:
    def test_face_count_is_tangential_product(self):
        g = mesh.FineGrid((220, 60, 80))
        part = mesh.build_coarse_partition(g, 20)
        assert mesh.faces_on_coarse_edge(part, 0).size == 400

    def test_single_face_for_unit_factor(self):
        g = mesh.FineGrid((2, 1, 1))
        part = mesh.build_coarse_partition(g, 1)
        assert mesh.faces_on_coarse_edge(part, 0).size == 1

    def test_faces_tile_the_coarse_face(self):
        g = mesh.FineGrid((8, 8, 8))
        part = mesh.build_coarse_partition(g, 4)
        for e in range(part.num_edges):
            faces = mesh.faces_on_coarse_edge(part, e)
            assert faces.size == 16
            axis = part.edge_axis[e]
            assert np.all(g.face_axis[faces] == axis)
            # brute force: exactly the fine faces between the two blocks
            lo, hi = part.edge_blocks[e]
            lo_cells = set(part.block_cells(lo).tolist())
            hi_cells = set(part.block_cells(hi).tolist())
            expected = [
                f
                for f in range(g.num_faces)
                if g.face_cells[f, 0] in lo_cells and g.face_cells[f, 1] in hi_cells
            ]
            assert sorted(faces.tolist()) == expected

    def test_all_normals_point_along_axis(self):
        g = mesh.FineGrid((4, 4, 4))
        part = mesh.build_coarse_partition(g, 2)
        for e in range(part.num_edges):
            faces = part.edge_faces[e]
            lo_blocks = part.block_of_cell[g.face_cells[faces, 0]]
            hi_blocks = part.block_of_cell[g.face_cells[faces, 1]]
            assert set(lo_blocks) == {part.edge_blocks[e, 0]}
            assert set(hi_blocks) == {part.edge_blocks[e, 1]}

    def test_unknown_edge_rejected(self):
        g = mesh.FineGrid((4, 4, 4))
        part = mesh.build_coarse_partition(g, 2)
        with pytest.raises(ValueError):
            mesh.faces_on_coarse_edge(part, part.num_edges)


class TestOversample:
    def test_zero_layers_reproduces_neighborhood(self):
        g = mesh.FineGrid((8, 8, 8))
        part = mesh.build_coarse_partition(g, 4)
        for e in range(part.num_edges):
            over = mesh.oversample(part, e, 0)
            assert np.array_equal(np.sort(part.neighborhood_cells(e)), over.cells)

    def test_interior_edge_box(self):
        g = mesh.FineGrid((40, 40, 40))
        part = mesh.build_coarse_partition(g, 10)
        # pick an x-edge centred in the domain
        for e in range(part.num_edges):
            lo_b, hi_b = part.edge_blocks[e]
            lo, hi = part.neighborhood_box(e)
            if part.edge_axis[e] == 0 and lo == (10, 10, 10):
                break
        over = mesh.oversample(part, e, 5)
        assert over.lo == (5, 5, 5)
        assert over.hi == (35, 25, 25)
        assert over.cells.size == 30 * 20 * 20
        expect = dilate_cells(g, part.neighborhood_cells(e), 5)
        assert np.array_equal(over.cells, expect)

    def test_boundary_edge_clipped(self):
        g = mesh.FineGrid((8, 8, 8))
        part = mesh.build_coarse_partition(g, 4)
        over = mesh.oversample(part, 0, 4)
        assert over.lo == (0, 0, 0)
        assert np.all(np.array(over.hi) <= np.array(g.dims))
        assert over.cells.size < g.num_cells or g.num_cells == over.cells.size

    def test_dilation_matches_brute_force_with_clipping(self):
        g = mesh.FineGrid((8, 4, 4))
        part = mesh.build_coarse_partition(g, (4, 2, 2))
        for e in range(part.num_edges):
            for layers in (0, 1, 3):
                over = mesh.oversample(part, e, layers)
                expect = dilate_cells(g, part.neighborhood_cells(e), layers)
                assert np.array_equal(over.cells, expect)

    def test_neighborhood_contained_in_oversample(self):
        g = mesh.FineGrid((8, 8, 4))
        part = mesh.build_coarse_partition(g, (4, 4, 2))
        over = mesh.oversample(part, 1, 2)
        assert set(part.neighborhood_cells(1)) <= set(over.cells)

    def test_unknown_edge_rejected(self):
        g = mesh.FineGrid((4, 4, 4))
        part = mesh.build_coarse_partition(g, 2)
        with pytest.raises(ValueError):
            mesh.oversample(part, -1, 1)

    def test_boundary_faces_outward(self):
        g = mesh.FineGrid((6, 4, 4))
        part = mesh.build_coarse_partition(g, 2)
        over = mesh.oversample(part, 0, 1)
        fids, outward = over.boundary_faces()
        mask = over.contains_mask()
        for f, sgn in zip(fids, outward):
            c0, c1 = g.face_cells[f]
            in0 = c0 >= 0 and mask[c0]
            in1 = c1 >= 0 and mask[c1]
            assert in0 != in1
            assert sgn == (1.0 if in0 else -1.0)


@st.composite
def grid_and_factor(draw):
    factors = tuple(draw(st.integers(1, 3)) for _ in range(3))
    blocks = tuple(draw(st.integers(1, 3)) for _ in range(3))
    dims = tuple(f * b for f, b in zip(factors, blocks))
    return dims, factors


@settings(max_examples=40, deadline=None)
@given(grid_and_factor())
def test_partition_count_formulas(params):
    dims, factors = params
    g = mesh.FineGrid(dims)
    part = mesh.build_coarse_partition(g, factors)
    bx, by, bz = part.block_dims
    assert part.num_blocks == bx * by * bz
    assert part.num_edges == (
        (bx - 1) * by * bz + bx * (by - 1) * bz + bx * by * (bz - 1)
    )
    for e in range(part.num_edges):
        assert part.edge_faces[e].size == part.edge_tangential_count(e)


@settings(max_examples=20, deadline=None)
@given(grid_and_factor())
def test_coarse_planes_cover_axis_faces(params):
    """Within a coarse-face plane, the edge faces of that plane tile it."""
    dims, factors = params
    g = mesh.FineGrid(dims)
    part = mesh.build_coarse_partition(g, factors)
    per_axis_edge_faces = [0, 0, 0]
    for e in range(part.num_edges):
        per_axis_edge_faces[part.edge_axis[e]] += part.edge_faces[e].size
    for axis in range(3):
        planes = part.block_dims[axis] - 1
        t1, t2 = [a for a in range(3) if a != axis]
        assert per_axis_edge_faces[axis] == planes * dims[t1] * dims[t2]
