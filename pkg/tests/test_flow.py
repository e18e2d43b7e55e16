"""Flow estimation, warping, splatting, and .flo round trips."""

import struct

import numpy as np
import pytest

from conftest import multiscale_texture, translation_triplet
from mird.errors import FloFormatError, InvalidInputError
from mird.flow import (
    backward_warp,
    estimate_flow,
    flow_magnitude,
    importance_z,
    occlusion_mask,
    read_flo,
    softmax_splat,
    write_flo,
)
from mird.synthdata import SceneSpec, Shape, analytic_flow, render


class TestEstimateFlow:
    def test_identical_frames_zero_flow(self):
        img = multiscale_texture(60, 80, 2)
        f = estimate_flow(img, img)
        assert flow_magnitude(f).max() <= 0.05

    def test_global_translation(self):
        big = multiscale_texture(140, 180, 0)
        a = big[10:110, 10:150]
        b = big[9:109, 8:148]  # b(p + (2, 1)) = a(p)
        f = estimate_flow(a, b)
        assert np.median(f[:, :, 0]) == pytest.approx(2.0, abs=0.25)
        assert np.median(f[:, :, 1]) == pytest.approx(1.0, abs=0.25)

    def test_disc_translation(self):
        spec = SceneSpec(height=96, width=128, background=(0.95,) * 3, shapes=(
            Shape("disc", (0.3, 0.5, 0.8), (0.1, 0.1, 0.1), 2.0, (3.0, 0.0),
                  center=(40.0, 48.0), radius=14.0),
        ))
        f = estimate_flow(render(spec, 0.0), render(spec, 1.0))
        inside = analytic_flow(spec)[:, :, 0] != 0.0
        assert f[inside, 0].mean() == pytest.approx(3.0, abs=0.5)
        assert f[inside, 1].mean() == pytest.approx(0.0, abs=0.5)

    def test_deterministic(self):
        i0, _, i1 = translation_triplet(6, 3, h=80, w=100, seed=4)
        f1 = estimate_flow(i0, i1)
        f2 = estimate_flow(i0, i1)
        assert np.array_equal(f1, f2)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            estimate_flow(np.zeros((10, 10)), np.zeros((10, 12)))


class TestFlowMagnitude:
    def test_zero(self):
        assert np.array_equal(flow_magnitude(np.zeros((4, 5, 2))), np.zeros((4, 5)))

    def test_three_four_five(self):
        f = np.empty((3, 3, 2))
        f[:, :, 0] = 3.0
        f[:, :, 1] = 4.0
        assert np.array_equal(flow_magnitude(f), np.full((3, 3), 5.0))

    def test_matches_elementwise(self, rng):
        f = rng.normal(0, 2, (6, 7, 2))
        expected = np.sqrt(f[:, :, 0] ** 2 + f[:, :, 1] ** 2)
        assert np.array_equal(flow_magnitude(f), expected)


class TestBackwardWarp:
    def test_zero_flow_identity(self, rng):
        img = rng.random((8, 9, 3))
        assert np.array_equal(backward_warp(img, np.zeros((8, 9, 2))), img)

    def test_constant_fixed_point(self, rng):
        img = np.full((8, 9), 0.7)
        f = rng.normal(0, 5, (8, 9, 2))
        assert np.allclose(backward_warp(img, f), 0.7, atol=1e-12)

    def test_integer_shift_on_ramp(self):
        ramp = np.tile(np.arange(12.0) / 12.0, (6, 1))
        f = np.zeros((6, 12, 2))
        f[:, :, 0] = 1.0
        out = backward_warp(ramp, f)
        assert np.array_equal(out[:, :-1], ramp[:, 1:])


class TestImportanceZ:
    def test_identical_zero(self, rng):
        img = rng.random((7, 7, 3))
        z = importance_z(img, img, np.zeros((7, 7, 2)))
        assert np.array_equal(z, np.zeros((7, 7)))

    def test_channel_sum_unit_difference(self):
        i0 = np.zeros((4, 4, 3))
        i1 = np.full((4, 4, 3), 1.0 / 3.0)
        z = importance_z(i0, i1, np.zeros((4, 4, 2)))
        assert np.allclose(z, -0.1, atol=1e-12)

    def test_never_positive(self, rng):
        i0, i1 = rng.random((6, 6, 3)), rng.random((6, 6, 3))
        f = rng.normal(0, 2, (6, 6, 2))
        assert np.all(importance_z(i0, i1, f) <= 0.0)


class TestSoftmaxSplat:
    def test_zero_flow_identity(self, rng):
        img = rng.random((10, 12, 3))
        out, mask = softmax_splat(img, np.zeros((10, 12, 2)), np.zeros((10, 12)), 0.7)
        assert np.abs(out - img).max() <= 1e-6
        assert np.all(mask == 1.0)

    def test_single_pixel_vacates(self):
        img = np.zeros((8, 8))
        img[2, 2] = 1.0
        f = np.zeros((8, 8, 2))
        f[2, 2, 0] = 2.0
        out, mask = softmax_splat(img, f, np.zeros((8, 8)), 1.0)
        assert mask[2, 2] == 0.0  # vacated, nothing arrived
        assert mask[2, 4] == 1.0
        # value 1 collides with the resident zero-flow pixel of value 0
        assert out[2, 4] == pytest.approx(0.5, abs=1e-12)

    def test_two_pixel_collision_softmax(self):
        img = np.zeros((4, 8))
        img[1, 1] = 0.2
        img[1, 5] = 0.8
        f = np.zeros((4, 8, 2))
        f[1, 1, 0] = 2.0
        f[1, 5, 0] = -2.0
        f[1, 3, 1] = 2.0  # move the resident pixel out of the way
        z = np.zeros((4, 8))
        z[1, 5] = np.log(3.0)
        out, _ = softmax_splat(img, f, z, 1.0)
        assert out[1, 3] == pytest.approx((0.2 * 1.0 + 0.8 * 3.0) / 4.0, abs=1e-12)

    def test_mass_conservation_interior(self, rng):
        img = rng.random((12, 14))
        z = -rng.random((12, 14))
        f = rng.uniform(-1.5, 1.5, (12, 14, 2))
        f[:2] = f[-2:] = 0.0
        f[:, :2] = f[:, -2:] = 0.0  # nothing leaves the frame
        out, _ = softmax_splat(img, f, z, 1.0)
        from mird.flow import _splat_accumulate

        _, den = _splat_accumulate(img, f, z, 1.0)
        assert np.sum(out * den) == pytest.approx(np.sum(img * np.exp(z)), abs=1e-5)

    def test_output_in_convex_hull(self, rng):
        img = rng.random((10, 10))
        f = rng.uniform(-3, 3, (10, 10, 2))
        z = -rng.random((10, 10))
        out, mask = softmax_splat(img, f, z, 0.8)
        received = mask == 1.0
        assert out[received].min() >= img.min() - 1e-12
        assert out[received].max() <= img.max() + 1e-12


class TestOcclusionMask:
    def test_zero_flow_all_valid(self):
        assert np.all(occlusion_mask(np.zeros((16, 16, 2)), 0.5) == 1.0)

    def test_uniform_shift_vacates_band(self):
        f = np.zeros((24, 40, 2))
        f[:, :, 0] = 8.0
        m = occlusion_mask(f, 1.0)
        assert np.all(m[:, :8] == 0.0)
        assert np.all(m[:, 8:] == 1.0)

    def test_opening_removes_isolated_speck(self):
        # a lone valid pixel inside a big hole cannot survive the opening
        f = np.zeros((30, 30, 2))
        f[5:25, 5:25, 0] = 40.0  # everything in the block flies off-frame
        f[14, 14, :] = 0.0  # except one pixel that stays put
        m = occlusion_mask(f, 1.0)
        assert m[14, 14] == 0.0


class TestFloIO:
    def test_roundtrip_bitwise(self, tmp_path, rng):
        field = rng.normal(0, 4, (9, 7, 2)).astype(np.float32).astype(np.float64)
        path = tmp_path / "field.flo"
        write_flo(field, path)
        assert np.array_equal(read_flo(path), field)

    def test_double_roundtrip_identical_bytes(self, tmp_path, rng):
        field = rng.normal(0, 4, (5, 6, 2)).astype(np.float32).astype(np.float64)
        p1, p2 = tmp_path / "a.flo", tmp_path / "b.flo"
        write_flo(field, p1)
        write_flo(read_flo(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_golden_single_pixel(self, tmp_path):
        blob = struct.pack("<fii", 202021.25, 1, 1) + struct.pack("<ff", 1.5, -2.0)
        assert len(blob) == 20
        path = tmp_path / "golden.flo"
        path.write_bytes(blob)
        field = read_flo(path)
        assert field.shape == (1, 1, 2)
        assert field[0, 0, 0] == 1.5 and field[0, 0, 1] == -2.0

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.flo"
        path.write_bytes(struct.pack("<fii", 0.0, 1, 1) + struct.pack("<ff", 0.0, 0.0))
        with pytest.raises(FloFormatError) as err:
            read_flo(path)
        assert err.value.byte_offset == 0

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "short.flo"
        path.write_bytes(struct.pack("<fii", 202021.25, 2, 2) + b"\x00" * 8)
        with pytest.raises(FloFormatError):
            read_flo(path)

    def test_non_finite_rejected(self, tmp_path):
        field = np.zeros((2, 2, 2))
        field[1, 1, 0] = np.nan
        with pytest.raises(FloFormatError):
            write_flo(field, tmp_path / "nan.flo")
