"""Readers and writers for flow and image formats, plus flow color coding.

Formats:
    Middlebury .flo: little-endian; bytes 0-3 hold float32 202021.25
        ("PIEH"), then int32 width, int32 height, then width*height
        interleaved (u, v) float32 pairs, row-major, top-to-bottom.
    KITTI 2015 flow PNG: 16-bit RGB; u_px = (R - 32768) / 64,
        v_px = (G - 32768) / 64, valid = (B > 0).
    Images: PNG (8- or 16-bit) and PPM, loaded as intensities in [0, 1].

All codecs are stateless; concurrent calls on distinct paths are safe.
"""

from __future__ import annotations

import os
import struct

import cv2
import numpy as np

from .core import FlowField, ImageBuffer

__all__ = [
    "FlowIOError",
    "read_flo",
    "write_flo",
    "read_kitti_png",
    "write_kitti_png",
    "read_image",
    "write_image",
    "to_grayscale",
    "flow_to_color",
]

FLO_MAGIC = 202021.25
_MAX_DIM = 100_000

# Rec. 601 luma weights; fixed so grayscale conversion is reproducible.
_LUMA = np.array([0.299, 0.587, 0.114])


class FlowIOError(ValueError):
    """A flow or image file failed to parse or encode."""


def read_flo(path: str | os.PathLike) -> FlowField:
    """Read a Middlebury .flo file.

    Raises:
        FlowIOError: on a bad magic number, absurd dimensions, or a
            truncated payload.
    """
    with open(path, "rb") as f:
        header = f.read(12)
        if len(header) < 12:
            raise FlowIOError(f"{path}: truncated header ({len(header)} bytes)")
        magic, width, height = struct.unpack("<fii", header)
        if magic != FLO_MAGIC:
            raise FlowIOError(f"{path}: bad magic {magic!r}, expected {FLO_MAGIC}")
        if not (1 <= width <= _MAX_DIM and 1 <= height <= _MAX_DIM):
            raise FlowIOError(f"{path}: absurd dimensions {width}x{height}")
        count = 2 * width * height
        data = np.fromfile(f, dtype="<f4", count=count)
        if data.size != count:
            raise FlowIOError(
                f"{path}: truncated payload ({data.size} of {count} floats)"
            )
    uv = data.reshape(height, width, 2).astype(np.float64)
    return FlowField(u=uv[..., 0], v=uv[..., 1])


def write_flo(path: str | os.PathLike, flow: FlowField) -> None:
    """Write a FlowField as Middlebury .flo (single precision, no mask)."""
    uv = np.stack([flow.u, flow.v], axis=-1).astype("<f4")
    if not np.isfinite(uv).all():
        raise FlowIOError(f"{path}: flow not representable in float32")
    with open(path, "wb") as f:
        f.write(struct.pack("<fii", FLO_MAGIC, flow.width, flow.height))
        f.write(uv.tobytes())


def read_kitti_png(path: str | os.PathLike) -> FlowField:
    """Read a KITTI 2015 flow PNG.

    Invalid pixels decode to displacement (0, 0) with valid=False.

    Raises:
        FlowIOError: if the raster is not 16-bit 3-channel.
    """
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FlowIOError(f"{path}: unreadable PNG")
    if raw.dtype != np.uint16 or raw.ndim != 3 or raw.shape[2] != 3:
        raise FlowIOError(
            f"{path}: expected 16-bit 3-channel flow PNG, got dtype={raw.dtype} shape={raw.shape}"
        )
    rgb = raw[:, :, ::-1].astype(np.float64)  # cv2 loads BGR
    valid = rgb[:, :, 2] > 0
    u = (rgb[:, :, 0] - 32768.0) / 64.0
    v = (rgb[:, :, 1] - 32768.0) / 64.0
    u[~valid] = 0.0
    v[~valid] = 0.0
    return FlowField(u=u, v=v, valid=valid)


def _quantize_64(x: np.ndarray) -> np.ndarray:
    """Round to the 1/64 grid, halves away from zero, as encoder counts."""
    return np.copysign(np.floor(np.abs(x) * 64.0 + 0.5), x)


def write_kitti_png(path: str | os.PathLike, flow: FlowField) -> None:
    """Write a FlowField as KITTI 2015 flow PNG.

    Displacements must fit the encoding range (roughly |u|, |v| < 512 px);
    invalid pixels are stored as zero displacement with the validity bit
    cleared.
    """
    qu = _quantize_64(flow.u) + 32768.0
    qv = _quantize_64(flow.v) + 32768.0
    if qu.min() < 0 or qu.max() > 65535 or qv.min() < 0 or qv.max() > 65535:
        raise FlowIOError(f"{path}: displacement outside KITTI encoding range (+-512 px)")
    valid = flow.valid_mask()
    r = np.where(valid, qu, 32768.0).astype(np.uint16)
    g = np.where(valid, qv, 32768.0).astype(np.uint16)
    b = valid.astype(np.uint16)
    bgr = np.stack([b, g, r], axis=-1)
    if not cv2.imwrite(str(path), bgr):
        raise FlowIOError(f"{path}: PNG write failed")


def read_image(path: str | os.PathLike) -> ImageBuffer:
    """Load a PNG or PPM image as intensities clamped to [0, 1].

    8-bit rasters scale by 1/255, 16-bit by 1/65535. Color images come
    back as 3-channel RGB, grayscale as 1-channel.
    """
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FlowIOError(f"{path}: unreadable image")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FlowIOError(f"{path}: unsupported sample type {raw.dtype}")
    data = raw.astype(np.float64) / scale
    if data.ndim == 3:
        if data.shape[2] == 4:
            data = data[:, :, :3]
        if data.shape[2] != 3:
            raise FlowIOError(f"{path}: unsupported channel count {data.shape[2]}")
        data = data[:, :, ::-1]  # BGR -> RGB
    return ImageBuffer(np.clip(data, 0.0, 1.0))


def write_image(path: str | os.PathLike, img: ImageBuffer, bit_depth: int = 8) -> None:
    """Write an image as PNG or PPM, quantizing [0, 1] to 8 or 16 bits."""
    if bit_depth == 8:
        data = np.clip(np.round(img.data * 255.0), 0, 255).astype(np.uint8)
    elif bit_depth == 16:
        data = np.clip(np.round(img.data * 65535.0), 0, 65535).astype(np.uint16)
    else:
        raise FlowIOError(f"unsupported bit depth {bit_depth}")
    if img.channels == 3:
        data = data[:, :, ::-1]  # RGB -> BGR
    else:
        data = data[:, :, 0]
    if not cv2.imwrite(str(path), data):
        raise FlowIOError(f"{path}: image write failed")


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """Collapse RGB to one channel with fixed 0.299/0.587/0.114 weights."""
    if img.channels == 1:
        return img
    return ImageBuffer(img.data @ _LUMA)


def _make_colorwheel() -> np.ndarray:
    """Standard 55-entry direction color wheel, rows in [0, 1] RGB."""
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((ry + yg + gc + cb + bm + mr, 3))
    col = 0
    wheel[col : col + ry, 0] = 1.0
    wheel[col : col + ry, 1] = np.arange(ry) / ry
    col += ry
    wheel[col : col + yg, 0] = 1.0 - np.arange(yg) / yg
    wheel[col : col + yg, 1] = 1.0
    col += yg
    wheel[col : col + gc, 1] = 1.0
    wheel[col : col + gc, 2] = np.arange(gc) / gc
    col += gc
    wheel[col : col + cb, 1] = 1.0 - np.arange(cb) / cb
    wheel[col : col + cb, 2] = 1.0
    col += cb
    wheel[col : col + bm, 2] = 1.0
    wheel[col : col + bm, 0] = np.arange(bm) / bm
    col += bm
    wheel[col : col + mr, 2] = 1.0 - np.arange(mr) / mr
    wheel[col : col + mr, 0] = 1.0
    return wheel


_COLORWHEEL = _make_colorwheel()


def flow_to_color(flow: FlowField, max_mag: float | None = None) -> ImageBuffer:
    """Render a flow field with the Middlebury color coding.

    Hue encodes direction via the 55-entry color wheel; saturation encodes
    magnitude normalized by max_mag. Zero flow maps to white; magnitudes
    above max_mag darken toward the saturated wheel color.

    Args:
        flow: Field to render.
        max_mag: Normalization magnitude. Defaults to the 99th-percentile
            magnitude of the field (1.0 when the field is all zero).

    Returns:
        3-channel ImageBuffer in [0, 1].
    """
    mag = np.hypot(flow.u, flow.v)
    if max_mag is None:
        max_mag = float(np.percentile(mag, 99.0))
    if max_mag <= 0.0:
        max_mag = 1.0
    u = flow.u / max_mag
    v = flow.v / max_mag
    rad = np.hypot(u, v)

    ncols = _COLORWHEEL.shape[0]
    angle = np.arctan2(-v, -u) / np.pi  # in [-1, 1]
    fk = (angle + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.intp)
    k1 = (k0 + 1) % ncols
    frac = fk - k0

    out = np.empty(flow.shape + (3,), dtype=np.float64)
    small = rad <= 1.0
    for c in range(3):
        col0 = _COLORWHEEL[k0, c]
        col1 = _COLORWHEEL[k1, c]
        col = (1.0 - frac) * col0 + frac * col1
        col = np.where(small, 1.0 - rad * (1.0 - col), col * 0.75)
        out[:, :, c] = col
    return ImageBuffer(out)
