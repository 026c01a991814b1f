import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_mask
from oracles import closing_reference

from cortexforge.errors import InvalidInputError
from cortexforge.volume import (
    GridGeometry,
    LabelVolume,
    ScalarVolume,
    fill_cavities,
    largest_component,
    morphological_close,
    resample,
    trilinear_sample,
)


def grid(dims=(8, 8, 8), spacing=1.0):
    return GridGeometry.isotropic(dims, spacing)


class TestGridGeometry:
    def test_rejects_bad_dims(self):
        with pytest.raises(InvalidInputError):
            GridGeometry((0, 4, 4), (1, 1, 1), np.eye(4))

    def test_rejects_nonpositive_spacing(self):
        with pytest.raises(InvalidInputError):
            GridGeometry((4, 4, 4), (1, 0, 1), np.eye(4))

    def test_rejects_singular_affine(self):
        affine = np.eye(4)
        affine[0, 0] = 0
        with pytest.raises(InvalidInputError):
            GridGeometry((4, 4, 4), (1, 1, 1), affine)

    def test_world_index_round_trip(self, rng):
        affine = np.eye(4)
        affine[:3, :3] = [[2, 0, 0.1], [0, 1.5, 0], [0, 0, 1.1]]
        affine[:3, 3] = (3, -4, 7)
        geo = GridGeometry((5, 6, 7), (2, 1.5, 1.1), affine)
        idx = rng.uniform(0, 4, size=(20, 3))
        assert np.allclose(geo.world_to_index(geo.index_to_world(idx)), idx, atol=1e-12)


class TestTrilinearSample:
    def test_constant_volume(self, rng):
        vol = ScalarVolume(grid(), np.full((8, 8, 8), 7.0))
        pts = rng.uniform(0.5, 6.5, size=(40, 3))
        assert np.allclose(trilinear_sample(vol, pts), 7.0, atol=1e-12)

    def test_exact_at_voxel_centers(self, rng):
        data = rng.normal(size=(8, 8, 8))
        vol = ScalarVolume(grid(), data)
        assert trilinear_sample(vol, (3.0, 5.0, 2.0)) == pytest.approx(data[3, 5, 2], abs=1e-14)

    def test_midpoint_between_centers(self):
        data = np.zeros((8, 8, 8))
        data[4, 3, 3] = 1.0
        vol = ScalarVolume(grid(), data)
        assert trilinear_sample(vol, (3.5, 3.0, 3.0)) == pytest.approx(0.5, abs=1e-14)

    def test_linear_along_axes_on_random_ramps(self, rng):
        # interpolation of an affine field is exact everywhere
        coef = rng.normal(size=4)
        ii, jj, kk = np.meshgrid(*(np.arange(8),) * 3, indexing="ij")
        data = coef[0] * ii + coef[1] * jj + coef[2] * kk + coef[3]
        vol = ScalarVolume(grid(), data)
        pts = rng.uniform(0, 7, size=(100, 3))
        expected = pts @ coef[:3] + coef[3]
        assert np.allclose(trilinear_sample(vol, pts), expected, atol=1e-10)

    def test_border_clamp(self):
        data = np.arange(8 * 8 * 8, dtype=float).reshape(8, 8, 8)
        vol = ScalarVolume(grid(), data)
        assert trilinear_sample(vol, (-5.0, 0.0, 0.0)) == pytest.approx(data[0, 0, 0])
        assert trilinear_sample(vol, (50.0, 7.0, 7.0)) == pytest.approx(data[7, 7, 7])

    def test_rejects_non_finite_points(self):
        vol = ScalarVolume(grid(), np.zeros((8, 8, 8)))
        with pytest.raises(InvalidInputError):
            trilinear_sample(vol, (np.nan, 0, 0))


class TestResample:
    def test_identity_geometry_is_bitwise_identity(self, rng):
        data = rng.normal(size=(8, 8, 8))
        vol = ScalarVolume(grid(), data)
        out = resample(vol, vol.geometry, "trilinear")
        assert np.array_equal(out.data, data)
        lab = LabelVolume(grid(), rng.integers(0, 4, size=(8, 8, 8)).astype(np.int32))
        out = resample(lab, lab.geometry, "nearest")
        assert np.array_equal(out.data, lab.data)

    def test_down_up_ramp_round_trip(self):
        slope = 0.7
        n = 16
        ii = np.meshgrid(*(np.arange(n),) * 3, indexing="ij")[0]
        vol = ScalarVolume(grid((n, n, n)), slope * ii)
        # coarse centers midway between fine pairs: interior is interpolated
        # exactly, the clamped borders are off by half a fine increment
        coarse_geo = GridGeometry.isotropic((n // 2, n, n), 2.0, origin_mm=(0.5, 0.0, 0.0))
        coarse = resample(vol, coarse_geo, "trilinear")
        back = resample(coarse, vol.geometry, "trilinear")
        assert np.max(np.abs(back.data - vol.data)) <= 0.5 * slope + 1e-12

    def test_nearest_translation_shifts_labels(self):
        n = 8
        ii = np.meshgrid(*(np.arange(n),) * 3, indexing="ij")[0]
        lab = LabelVolume(grid((n, n, n)), (ii >= 4).astype(np.int32))
        shifted_geo = GridGeometry.isotropic((n, n, n), 1.0, origin_mm=(1.0, 0.0, 0.0))
        out = resample(lab, shifted_geo, "nearest")
        assert np.array_equal(out.data[:-1], lab.data[1:])

    def test_trilinear_on_labels_rejected(self):
        lab = LabelVolume(grid(), np.zeros((8, 8, 8), np.int32))
        with pytest.raises(InvalidInputError):
            resample(lab, lab.geometry, "trilinear")

    def test_unknown_mode_rejected(self):
        vol = ScalarVolume(grid(), np.zeros((8, 8, 8)))
        with pytest.raises(InvalidInputError):
            resample(vol, vol.geometry, "cubic")


class TestMorphologicalClose:
    def test_solid_cube_unchanged(self):
        mask = make_mask((10, 10, 10), lambda i, j, k: (i >= 2) & (i < 8) & (j >= 2) & (j < 8) & (k >= 2) & (k < 8))
        out = morphological_close(mask, 1)
        assert np.array_equal(out.data, mask.data)

    def test_single_voxel_hole_filled(self):
        def fill(i, j, k):
            cube = (i >= 2) & (i < 8) & (j >= 2) & (j < 8) & (k >= 2) & (k < 8)
            return cube & ~((i == 5) & (j == 5) & (k == 5))

        mask = make_mask((10, 10, 10), fill)
        out = morphological_close(mask, 1)
        assert out.data[5, 5, 5] == 1

    def test_gap_bridged_matches_bruteforce(self):
        def fill(i, j, k):
            a = (i >= 1) & (i < 4) & (j >= 2) & (j < 5) & (k >= 2) & (k < 5)
            b = (i >= 5) & (i < 8) & (j >= 2) & (j < 5) & (k >= 2) & (k < 5)
            return a | b

        mask = make_mask((10, 10, 10), fill)
        out = morphological_close(mask, 1)
        expected = closing_reference(mask.data.astype(bool), 1)
        assert np.array_equal(out.data.astype(bool), expected)
        assert out.data[4, 3, 3] == 1  # the gap is bridged

    def test_rejects_radius_zero(self):
        mask = make_mask((6, 6, 6), lambda i, j, k: i == 3)
        with pytest.raises(InvalidInputError):
            morphological_close(mask, 0)

    def test_rejects_nonbinary(self):
        lab = LabelVolume(grid((6, 6, 6)), np.full((6, 6, 6), 2, np.int32))
        with pytest.raises(InvalidInputError):
            morphological_close(lab, 1)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), radius=st.integers(1, 2))
    def test_idempotent_and_matches_oracle(self, seed, radius):
        data = (np.random.default_rng(seed).random((9, 9, 9)) < 0.35).astype(np.int32)
        mask = LabelVolume(grid((9, 9, 9)), data)
        once = morphological_close(mask, radius)
        twice = morphological_close(once, radius)
        assert np.array_equal(once.data, twice.data)
        assert np.array_equal(once.data.astype(bool), closing_reference(data.astype(bool), radius))
        # closing is extensive
        assert np.all(once.data >= data)


class TestLargestComponent:
    def test_single_component_unchanged(self):
        mask = make_mask((8, 8, 8), lambda i, j, k: (i < 3) & (j < 3) & (k < 3))
        out = largest_component(mask)
        assert np.array_equal(out.data, mask.data)

    def test_keeps_bigger(self):
        def fill(i, j, k):
            big = (i < 2) & (j < 5) & (k == 0)  # 10 voxels
            small = (i > 5) & (j < 1) & (k < 3) & (i < 8)  # 6 voxels
            return big | small

        mask = make_mask((8, 8, 8), fill)
        out = largest_component(mask)
        assert out.data.sum() == 10
        assert out.data[0, 0, 0] == 1 and out.data[6, 0, 0] == 0

    def test_tie_broken_by_lowest_linear_index(self):
        def fill(i, j, k):
            a = (i == 7) & (j < 5) & (k == 0)  # first voxel linear index 7
            b = (i == 0) & (j < 5) & (k == 2)  # first voxel linear index 0 + 8*8*2
            return a | b

        mask = make_mask((8, 8, 8), fill)
        out = largest_component(mask)
        # x-fastest order: (7, 0, 0) has linear index 7, (0, 0, 2) has 128
        assert out.data[7, 0, 0] == 1 and out.data[0, 0, 2] == 0

    def test_empty_mask_rejected(self):
        mask = make_mask((6, 6, 6), lambda i, j, k: np.zeros_like(i, bool))
        with pytest.raises(InvalidInputError):
            largest_component(mask)

    def test_diagonal_voxels_are_separate_components(self):
        def fill(i, j, k):
            return ((i == 2) & (j == 2) & (k == 2)) | ((i == 3) & (j == 3) & (k == 2))

        mask = make_mask((6, 6, 6), fill)
        out = largest_component(mask)
        assert out.data.sum() == 1  # 6-connectivity does not join diagonals
        assert out.data[2, 2, 2] == 1  # tie-break by lowest linear index

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_output_subset_and_connected(self, seed):
        from scipy import ndimage

        data = (np.random.default_rng(seed).random((8, 8, 8)) < 0.3).astype(np.int32)
        if not data.any():
            data[4, 4, 4] = 1
        mask = LabelVolume(grid((8, 8, 8)), data)
        out = largest_component(mask)
        assert np.all(out.data <= data)
        _, n = ndimage.label(out.data, structure=ndimage.generate_binary_structure(3, 1))
        assert n == 1


class TestFillCavities:
    def test_enclosed_cavity_filled(self):
        def fill(i, j, k):
            shell = (i >= 1) & (i < 7) & (j >= 1) & (j < 7) & (k >= 1) & (k < 7)
            hole = (i >= 3) & (i < 5) & (j >= 3) & (j < 5) & (k >= 3) & (k < 5)
            return shell & ~hole

        mask = make_mask((8, 8, 8), fill)
        out = fill_cavities(mask)
        assert out.data[3, 3, 3] == 1
        assert out.data[0, 0, 0] == 0
