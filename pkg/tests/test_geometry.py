"""Back-projection, registration and pixel-rect cropping."""

import numpy as np
import pytest

from densiface.errors import ConfigurationError, UsageError
from densiface.geometry import (
    ColorFrame,
    DepthFrame,
    Intrinsics,
    PixelRect,
    PointCloud,
    RigExtrinsics,
    back_project,
    crop_by_rect,
    forward_project,
    register_depth_to_color,
)


def make_depth(arr):
    arr = np.asarray(arr, dtype=np.uint16)
    return DepthFrame(width=arr.shape[1], height=arr.shape[0], samples=arr)


def make_color(w, h, seed=0):
    rng = np.random.default_rng(seed)
    return ColorFrame(width=w, height=h,
                      pixels=rng.integers(0, 256, (h, w, 3), dtype=np.uint8))


INTR = Intrinsics(focal_px=580.0, principal_u=320.0, principal_v=240.0,
                  width=640, height=480)


class TestBackProject:
    def test_principal_point_ray(self):
        # pixel exactly at (u0, v0), depth 800 mm -> (0, 0, 0.8)
        depth = np.zeros((480, 640), dtype=np.uint16)
        depth[240, 320] = 800
        cloud = back_project(make_depth(depth), INTR)
        assert len(cloud) == 1
        np.testing.assert_allclose(cloud.points[0], [0.0, 0.0, 0.8], atol=1e-15)

    def test_off_center_pixel(self):
        # x = (420-320)*0.8/580 = 0.13793103..., y = (300-240)*0.8/580 = 0.08275862...
        depth = np.zeros((480, 640), dtype=np.uint16)
        depth[300, 420] = 800
        cloud = back_project(make_depth(depth), INTR)
        np.testing.assert_allclose(
            cloud.points[0], [100 * 0.8 / 580, 60 * 0.8 / 580, 0.8], rtol=1e-12)
        np.testing.assert_array_equal(cloud.source_pixel[0], [420, 300])

    def test_invalid_pixel_emits_nothing(self):
        depth = np.zeros((480, 640), dtype=np.uint16)
        cloud = back_project(make_depth(depth), INTR)
        assert len(cloud) == 0

    def test_count_equals_valid_samples(self):
        rng = np.random.default_rng(3)
        depth = rng.integers(0, 3000, (480, 640)).astype(np.uint16)
        cloud = back_project(make_depth(depth), INTR)
        assert len(cloud) == int((depth > 0).sum())

    def test_ratio_identity_random_frames(self):
        # every emitted point satisfies x*f == (u-u0)*z and y*f == (v-v0)*z
        rng = np.random.default_rng(7)
        for _ in range(5):
            depth = rng.integers(0, 4000, (48, 64)).astype(np.uint16)
            intr = Intrinsics(float(rng.uniform(100, 900)), float(rng.uniform(0, 63)),
                              float(rng.uniform(0, 47)), 64, 48)
            cloud = back_project(make_depth(depth), intr)
            u = cloud.source_pixel[:, 0]
            v = cloud.source_pixel[:, 1]
            z = cloud.points[:, 2]
            np.testing.assert_allclose(cloud.points[:, 0] * intr.focal_px,
                                       (u - intr.principal_u) * z, rtol=1e-12)
            np.testing.assert_allclose(cloud.points[:, 1] * intr.focal_px,
                                       (v - intr.principal_v) * z, rtol=1e-12)

    def test_round_trip_projection(self):
        rng = np.random.default_rng(11)
        depth = rng.integers(200, 5000, (48, 64)).astype(np.uint16)
        intr = Intrinsics(400.0, 32.0, 24.0, 64, 48)
        cloud = back_project(make_depth(depth), intr)
        uv = forward_project(cloud.points, intr)
        err = np.abs(uv - cloud.source_pixel.astype(np.float64))
        # pixel error scaled to meters at the focal plane stays below 1e-9
        assert (err * cloud.points[:, 2:3] / intr.focal_px).max() < 1e-9

    def test_dimension_mismatch(self):
        depth = make_depth(np.ones((10, 10), dtype=np.uint16))
        with pytest.raises(ConfigurationError):
            back_project(depth, INTR)


class TestRegistration:
    def test_zero_baseline_is_color_copy(self):
        rng = np.random.default_rng(0)
        depth = rng.integers(0, 2000, (48, 64)).astype(np.uint16)
        intr = Intrinsics(400.0, 32.0, 24.0, 64, 48)
        color = make_color(64, 48)
        reg = register_depth_to_color(make_depth(depth), color, intr, intr,
                                      RigExtrinsics((0.0, 0.0, 0.0)))
        valid = depth > 0
        assert bool((reg.has_color == valid).all())
        np.testing.assert_array_equal(reg.color_at_depth[valid], color.pixels[valid])

    def test_horizontal_shift_rounds_half_up(self):
        # z = 1.0 m, baseline +0.025 m, f = 580 -> shift 14.5 px -> pixel offset 15
        depth = np.zeros((480, 640), dtype=np.uint16)
        depth[240, 300] = 1000
        color = make_color(640, 480, seed=5)
        reg = register_depth_to_color(make_depth(depth), color, INTR, INTR,
                                      RigExtrinsics((0.025, 0.0, 0.0)))
        assert reg.has_color[240, 300]
        np.testing.assert_array_equal(reg.color_at_depth[240, 300],
                                      color.pixels[240, 315])

    def test_out_of_frame_projection_has_no_color(self):
        # pixel at u=0 shifted far left projects to negative u'
        intr = Intrinsics(400.0, 32.0, 24.0, 64, 48)
        depth = np.zeros((48, 64), dtype=np.uint16)
        depth[24, 0] = 500
        color = make_color(64, 48)
        reg = register_depth_to_color(make_depth(depth), color, intr, intr,
                                      RigExtrinsics((-0.1, 0.0, 0.0)))
        assert not reg.has_color[24, 0]


class TestCropByRect:
    def four_point_cloud(self):
        points = np.array([[0, 0, 1.0], [0.1, 0, 1.0], [0.2, 0, 1.0], [0.3, 0, 1.0]])
        pixels = np.array([[2, 2], [9, 2], [2, 9], [9, 9]])
        return PointCloud(points=points, source_pixel=pixels)

    def test_full_frame_rect_is_identity(self):
        cloud = self.four_point_cloud()
        out = crop_by_rect(cloud, PixelRect(0, 0, 10, 10))
        np.testing.assert_array_equal(out.points, cloud.points)

    def test_empty_rect(self):
        out = crop_by_rect(self.four_point_cloud(), PixelRect(0, 0, 0, 10))
        assert len(out) == 0

    def test_partial_rect_preserves_order(self):
        # rect covering column range 0..4 keeps pixels (2,2) and (2,9) in order
        out = crop_by_rect(self.four_point_cloud(), PixelRect(0, 0, 5, 10))
        np.testing.assert_array_equal(out.source_pixel, [[2, 2], [2, 9]])

    def test_inclusive_bounds(self):
        # rect x=2,w=8 covers columns 2..9 inclusive
        out = crop_by_rect(self.four_point_cloud(), PixelRect(2, 2, 8, 8))
        assert len(out) == 4

    def test_missing_source_pixel_is_usage_error(self):
        cloud = PointCloud(points=np.zeros((1, 3)) + [0, 0, 1])
        with pytest.raises(UsageError):
            crop_by_rect(cloud, PixelRect(0, 0, 1, 1))
