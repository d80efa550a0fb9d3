"""Pinhole camera model, depth/color registration and back-projection.

Depth frames store millimeters with 0 marking an invalid sample; all 3D
coordinates are meters.  A single focal length is used for both axes and
the depth-to-color rig is a pure translation (no rotation).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, UsageError


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole parameters: focal length and principal point, in pixels."""

    focal_px: float
    principal_u: float
    principal_v: float
    width: int
    height: int

    def __post_init__(self):
        if not self.focal_px > 0:
            raise ConfigurationError(f"focal_px must be > 0, got {self.focal_px}")
        if not (0 <= self.principal_u < self.width):
            raise ConfigurationError(
                f"principal_u {self.principal_u} outside [0, {self.width})")
        if not (0 <= self.principal_v < self.height):
            raise ConfigurationError(
                f"principal_v {self.principal_v} outside [0, {self.height})")


@dataclass(frozen=True)
class RigExtrinsics:
    """Translation (meters) from the depth-camera origin to the color-camera origin."""

    baseline: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.baseline) != 3 or not all(np.isfinite(b) for b in self.baseline):
            raise ConfigurationError(f"baseline must be 3 finite components, got {self.baseline}")


@dataclass(frozen=True)
class DepthFrame:
    """Row-major depth grid in millimeters (uint16 range); 0 = no return."""

    width: int
    height: int
    samples: np.ndarray  # (height, width) uint16

    def __post_init__(self):
        if self.samples.shape != (self.height, self.width):
            raise ConfigurationError(
                f"depth samples shape {self.samples.shape} != ({self.height}, {self.width})")

    def valid_mask(self) -> np.ndarray:
        return self.samples > 0


@dataclass(frozen=True)
class ColorFrame:
    """Row-major 8-bit RGB grid."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width, 3):
            raise ConfigurationError(
                f"color pixels shape {self.pixels.shape} != ({self.height}, {self.width}, 3)")


@dataclass(frozen=True)
class RegisteredFrame:
    """Depth frame plus the color sampled for each valid depth pixel."""

    depth: DepthFrame
    color_at_depth: np.ndarray  # (height, width, 3) uint8; undefined where has_color is False
    has_color: np.ndarray  # (height, width) bool
    depth_intrinsics: Intrinsics


@dataclass(frozen=True)
class PixelRect:
    """Axis-aligned pixel rectangle covering columns x..x+w-1 and rows y..y+h-1."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise UsageError(f"rect extents must be non-negative, got {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h

    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class PointCloud:
    """Colored 3D points in meters, optionally tagged with their source depth pixel."""

    points: np.ndarray  # (n, 3) float64
    colors: Optional[np.ndarray] = None  # (n, 3) uint8
    source_pixel: Optional[np.ndarray] = None  # (n, 2) int64, (u, v)

    def __post_init__(self):
        n = len(self.points)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise UsageError(f"points must be (n, 3), got {self.points.shape}")
        if self.colors is not None and self.colors.shape != (n, 3):
            raise UsageError(f"colors shape {self.colors.shape} != ({n}, 3)")
        if self.source_pixel is not None and self.source_pixel.shape != (n, 2):
            raise UsageError(f"source_pixel shape {self.source_pixel.shape} != ({n}, 2)")

    def __len__(self) -> int:
        return len(self.points)

    def select(self, mask_or_indices) -> "PointCloud":
        """Sub-cloud at the given mask/indices, preserving order."""
        return PointCloud(
            points=self.points[mask_or_indices],
            colors=None if self.colors is None else self.colors[mask_or_indices],
            source_pixel=None if self.source_pixel is None
            else self.source_pixel[mask_or_indices],
        )


def _pixel_grid(intr: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    u = np.arange(intr.width, dtype=np.float64)
    v = np.arange(intr.height, dtype=np.float64)
    return np.meshgrid(u, v)


def back_project(depth: DepthFrame, intr: Intrinsics) -> PointCloud:
    """Lift every valid depth pixel to a 3D point.

    A pixel (u, v) at depth z (meters) maps to
    x = (u - u0) * z / f,  y = (v - v0) * z / f,  leaving z unchanged.
    Invalid pixels (depth 0) emit nothing.  Points come out in row-major
    pixel order with their (u, v) recorded in source_pixel.
    """
    if (depth.width, depth.height) != (intr.width, intr.height):
        raise ConfigurationError(
            f"depth frame {depth.width}x{depth.height} does not match "
            f"intrinsics {intr.width}x{intr.height}")
    uu, vv = _pixel_grid(intr)
    valid = depth.valid_mask()
    z = depth.samples[valid].astype(np.float64) / 1000.0
    u = uu[valid]
    v = vv[valid]
    x = (u - intr.principal_u) * z / intr.focal_px
    y = (v - intr.principal_v) * z / intr.focal_px
    points = np.stack([x, y, z], axis=1)
    pixels = np.stack([u.astype(np.int64), v.astype(np.int64)], axis=1)
    return PointCloud(points=points, source_pixel=pixels)


def forward_project(points: np.ndarray, intr: Intrinsics) -> np.ndarray:
    """Project 3D points (n, 3) to continuous pixel coordinates (n, 2)."""
    z = points[:, 2]
    u = intr.focal_px * points[:, 0] / z + intr.principal_u
    v = intr.focal_px * points[:, 1] / z + intr.principal_v
    return np.stack([u, v], axis=1)


def register_depth_to_color(
    depth: DepthFrame,
    color: ColorFrame,
    depth_intr: Intrinsics,
    color_intr: Intrinsics,
    rig: RigExtrinsics,
) -> RegisteredFrame:
    """Sample the color image onto the depth grid.

    Each valid depth pixel is back-projected, translated by the rig
    baseline, projected into the color camera and assigned the color of
    the nearest integer pixel (round half up).  Projections landing
    outside the color frame simply leave that depth pixel colorless.
    """
    cloud = back_project(depth, depth_intr)
    shifted = cloud.points + np.asarray(rig.baseline, dtype=np.float64)
    uv = forward_project(shifted, color_intr)
    ui = np.floor(uv[:, 0] + 0.5).astype(np.int64)
    vi = np.floor(uv[:, 1] + 0.5).astype(np.int64)
    inside = (ui >= 0) & (ui < color.width) & (vi >= 0) & (vi < color.height)

    color_at_depth = np.zeros((depth.height, depth.width, 3), dtype=np.uint8)
    has_color = np.zeros((depth.height, depth.width), dtype=bool)
    src = cloud.source_pixel
    du = src[inside, 0]
    dv = src[inside, 1]
    color_at_depth[dv, du] = color.pixels[vi[inside], ui[inside]]
    has_color[dv, du] = True
    return RegisteredFrame(
        depth=depth,
        color_at_depth=color_at_depth,
        has_color=has_color,
        depth_intrinsics=depth_intr,
    )


def crop_by_rect(cloud: PointCloud, rect: PixelRect) -> PointCloud:
    """Keep the points whose source pixel lies inside rect, preserving order."""
    if cloud.source_pixel is None:
        raise UsageError("crop_by_rect requires a cloud with source_pixel")
    u = cloud.source_pixel[:, 0]
    v = cloud.source_pixel[:, 1]
    keep = (
        (u >= rect.x) & (u <= rect.x + rect.w - 1)
        & (v >= rect.y) & (v <= rect.y + rect.h - 1)
    )
    return cloud.select(keep)
