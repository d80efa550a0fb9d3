"""Readers and writers for the on-disk artifacts.

Depth frames travel as 16-bit big-endian binary PGM (P5, maxval 65535,
values in millimeters, 0 = invalid), color frames as binary PPM (P6,
maxval 255), camera parameters as a small JSON document, and point
clouds as ASCII PLY.  Reads are strict: wrong magic numbers, bad
maxvals, truncated payloads and trailing bytes are all rejected with
the offending byte offset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FormatError
from .geometry import ColorFrame, DepthFrame, Intrinsics, PointCloud, RigExtrinsics

_WHITESPACE = b" \t\r\n"


class _HeaderScanner:
    """Token scanner for Netpbm headers that keeps track of byte offsets."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _skip_space_and_comments(self):
        while self.pos < len(self.data):
            c = self.data[self.pos:self.pos + 1]
            if c in (b" ", b"\t", b"\r", b"\n"):
                self.pos += 1
            elif c == b"#":
                nl = self.data.find(b"\n", self.pos)
                self.pos = len(self.data) if nl < 0 else nl + 1
            else:
                return

    def token(self, what: str) -> bytes:
        self._skip_space_and_comments()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos:self.pos + 1] not in (
                b" ", b"\t", b"\r", b"\n", b"#"):
            self.pos += 1
        if self.pos == start:
            raise FormatError(f"missing {what} at byte {start}")
        return self.data[start:self.pos]

    def int_token(self, what: str) -> int:
        start = self.pos
        tok = self.token(what)
        try:
            return int(tok)
        except ValueError:
            raise FormatError(f"bad {what} {tok!r} at byte {start}") from None

    def begin_payload(self):
        # exactly one whitespace byte separates the maxval from the payload
        if self.pos >= len(self.data) or self.data[self.pos:self.pos + 1] not in (
                b" ", b"\t", b"\r", b"\n"):
            raise FormatError(f"missing payload separator at byte {self.pos}")
        self.pos += 1


def _read_netpbm(data: bytes, magic: bytes, maxval: int, bytes_per_value: int,
                 values_per_pixel: int):
    sc = _HeaderScanner(data)
    got = sc.token("magic number")
    if got != magic:
        raise FormatError(f"expected magic {magic.decode()} at byte 0, got {got!r}")
    width = sc.int_token("width")
    height = sc.int_token("height")
    if width <= 0 or height <= 0:
        raise FormatError(f"bad dimensions {width}x{height}")
    got_maxval = sc.int_token("maxval")
    if got_maxval != maxval:
        raise FormatError(f"maxval must be {maxval}, got {got_maxval} at byte {sc.pos}")
    sc.begin_payload()
    expected = width * height * bytes_per_value * values_per_pixel
    payload = data[sc.pos:]
    if len(payload) < expected:
        raise FormatError(
            f"payload truncated at byte {len(data)}: need {expected} bytes "
            f"from offset {sc.pos}, have {len(payload)}")
    if len(payload) > expected:
        raise FormatError(f"trailing garbage after payload at byte {sc.pos + expected}")
    return width, height, payload


def read_depth_pgm(data: bytes) -> DepthFrame:
    """Parse a binary 16-bit PGM (P5, maxval 65535, big-endian) into a DepthFrame."""
    width, height, payload = _read_netpbm(data, b"P5", 65535, 2, 1)
    samples = np.frombuffer(payload, dtype=">u2").reshape(height, width)
    return DepthFrame(width=width, height=height,
                      samples=samples.astype(np.uint16))


def write_depth_pgm(frame: DepthFrame) -> bytes:
    header = f"P5\n{frame.width} {frame.height}\n65535\n".encode("ascii")
    return header + frame.samples.astype(">u2").tobytes()


def read_color_ppm(data: bytes) -> ColorFrame:
    """Parse a binary PPM (P6, maxval 255) into a ColorFrame."""
    if data[:2] == b"P3":
        raise FormatError("expected magic P6 at byte 0, got b'P3' (ASCII PPM unsupported)")
    width, height, payload = _read_netpbm(data, b"P6", 255, 1, 3)
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return ColorFrame(width=width, height=height, pixels=pixels.copy())


def write_color_ppm(frame: ColorFrame) -> bytes:
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    return header + frame.pixels.astype(np.uint8).tobytes()


@dataclass(frozen=True)
class IntrinsicsDoc:
    """Camera parameters for the depth/color pair plus their rig baseline."""

    depth_intrinsics: Intrinsics
    color_intrinsics: Intrinsics
    baseline: tuple[float, float, float]

    @property
    def rig(self) -> RigExtrinsics:
        return RigExtrinsics(self.baseline)


_INTRINSICS_FIELDS = ("focal_px", "principal_u", "principal_v", "width", "height")


def _parse_intrinsics(obj, name: str) -> Intrinsics:
    if not isinstance(obj, dict):
        raise FormatError(f"{name} must be an object")
    values = {}
    for field in _INTRINSICS_FIELDS:
        if field not in obj:
            raise FormatError(f"{name}.{field} is missing")
        value = obj[field]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise FormatError(f"{name}.{field} must be a number, got {value!r}")
        values[field] = value
    try:
        return Intrinsics(
            focal_px=float(values["focal_px"]),
            principal_u=float(values["principal_u"]),
            principal_v=float(values["principal_v"]),
            width=int(values["width"]),
            height=int(values["height"]),
        )
    except ConfigurationError as exc:
        raise FormatError(f"{name}: {exc}") from None


def read_intrinsics(text: str) -> IntrinsicsDoc:
    """Parse and validate an intrinsics JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"intrinsics JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError("intrinsics document must be a JSON object")
    for field in ("depth_intrinsics", "color_intrinsics", "baseline"):
        if field not in doc:
            raise FormatError(f"{field} is missing")
    depth = _parse_intrinsics(doc["depth_intrinsics"], "depth_intrinsics")
    color = _parse_intrinsics(doc["color_intrinsics"], "color_intrinsics")
    baseline = doc["baseline"]
    if (not isinstance(baseline, list) or len(baseline) != 3
            or any(isinstance(b, bool) or not isinstance(b, (int, float))
                   for b in baseline)):
        raise FormatError(f"baseline must be a list of 3 numbers, got {baseline!r}")
    if not all(np.isfinite(b) for b in baseline):
        raise FormatError(f"baseline components must be finite, got {baseline!r}")
    return IntrinsicsDoc(depth_intrinsics=depth, color_intrinsics=color,
                         baseline=(float(baseline[0]), float(baseline[1]),
                                   float(baseline[2])))


def write_ply(cloud: PointCloud) -> bytes:
    """Serialize a cloud as ASCII PLY 1.0 with xyz floats and uchar RGB."""
    n = len(cloud)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {n}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    colors = cloud.colors
    if colors is None:
        colors = np.full((n, 3), 255, dtype=np.uint8)
    for (x, y, z), (r, g, b) in zip(cloud.points, colors):
        lines.append(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}")
    return ("\n".join(lines) + "\n").encode("ascii")
