"""Dense flow and image math: sampling, warping, composition, error maps.

All functions here are pure and operate on double-precision arrays. Pixel
coordinates follow image convention: x grows rightward (columns), y grows
downward (rows), and a flow vector (u, v) displaces a pixel by u columns
and v rows. Sampling outside the image clamps to the nearest edge pixel
and reports the access as out of bounds instead of failing, so warps stay
total and consumers can decide what to do with unreliable pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FlowField",
    "ImageBuffer",
    "bilinear_sample",
    "warp_image",
    "warp_flow",
    "compose_warp_chain",
    "brightness_error",
    "flow_magnitude",
    "out_of_boundary_mask",
]


@dataclass
class FlowField:
    """Dense per-pixel displacement field with an optional validity mask.

    Attributes:
        u: Horizontal displacement in pixels, shape (H, W), float64.
        v: Vertical displacement in pixels, shape (H, W), float64.
        valid: Optional boolean mask, shape (H, W); True where the stored
            displacement is trustworthy. None means valid everywhere.
    """

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.ndim != 2 or self.u.shape != self.v.shape:
            raise ValueError(
                f"flow components must be matching 2-D grids, got u{self.u.shape} v{self.v.shape}"
            )
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise ValueError("flow contains non-finite displacements")
        if self.valid is not None:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.u.shape:
                raise ValueError(
                    f"valid mask shape {self.valid.shape} does not match flow {self.u.shape}"
                )

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def valid_mask(self) -> np.ndarray:
        """Validity as a concrete boolean array (all True when unset)."""
        if self.valid is None:
            return np.ones(self.u.shape, dtype=bool)
        return self.valid

    def stack(self) -> np.ndarray:
        """Return the field as an (H, W, 2) array with channels (u, v)."""
        return np.stack([self.u, self.v], axis=-1)

    @classmethod
    def from_array(cls, uv: np.ndarray, valid: np.ndarray | None = None) -> "FlowField":
        """Build a field from an (H, W, 2) array with channels (u, v)."""
        uv = np.asarray(uv, dtype=np.float64)
        if uv.ndim != 3 or uv.shape[2] != 2:
            raise ValueError(f"expected (H, W, 2) array, got {uv.shape}")
        return cls(u=uv[..., 0], v=uv[..., 1], valid=valid)

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(u=np.zeros((height, width)), v=np.zeros((height, width)))

    @classmethod
    def constant(cls, height: int, width: int, u: float, v: float) -> "FlowField":
        return cls(u=np.full((height, width), float(u)), v=np.full((height, width), float(v)))


@dataclass
class ImageBuffer:
    """Dense H x W x C raster of real-valued intensities.

    Loaded images live in [0, 1]; derived maps (brightness errors, flow
    magnitudes) reuse the container and may exceed that range. Values must
    be finite. Internally the data is always stored as (H, W, C) float64,
    with C in {1, 3}.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W) or (H, W, C) with C in {{1, 3}}, got {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("image contains non-finite values")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def plane(self, c: int = 0) -> np.ndarray:
        """Single channel as an (H, W) array."""
        return self.data[:, :, c]


def _check_same_shape(a_shape: tuple[int, int], b_shape: tuple[int, int], what: str) -> None:
    if a_shape != b_shape:
        raise ValueError(f"{what}: dimension mismatch {a_shape} vs {b_shape}")


def _sample_bilinear(data: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Clamped bilinear sampling of (H, W, C) data at real coordinates.

    Returns (values, in_bounds, corner_info) where values has the shape of
    xs plus a trailing channel axis, in_bounds marks coordinates that fell
    inside [0, W-1] x [0, H-1] before clamping, and corner_info carries the
    integer corner indices and weights for mask-aware consumers.
    """
    h, w = data.shape[:2]
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    in_bounds = (xs >= 0.0) & (xs <= w - 1.0) & (ys >= 0.0) & (ys <= h - 1.0)

    xc = np.clip(xs, 0.0, w - 1.0)
    yc = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0

    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy

    values = (
        w00[..., None] * data[y0, x0]
        + w01[..., None] * data[y0, x1]
        + w10[..., None] * data[y1, x0]
        + w11[..., None] * data[y1, x1]
    )
    corners = ((y0, x0, w00), (y0, x1, w01), (y1, x0, w10), (y1, x1, w11))
    return values, in_bounds, corners


def _sample_mask(mask: np.ndarray, corners) -> np.ndarray:
    """True where every corner that actually contributes (weight > 0) is valid."""
    ok = np.ones(corners[0][2].shape, dtype=bool)
    for yy, xx, wt in corners:
        ok &= mask[yy, xx] | (wt <= 0.0)
    return ok


def bilinear_sample(img: ImageBuffer, x: float, y: float) -> tuple[np.ndarray, bool]:
    """Bilinearly interpolate one pixel value at real coordinates (x, y).

    Coordinates outside [0, W-1] x [0, H-1] are clamped to the nearest edge
    pixel and flagged via in_bounds=False. Total function: never raises for
    any finite coordinate.

    Args:
        img: Source image.
        x: Horizontal coordinate in pixels.
        y: Vertical coordinate in pixels.

    Returns:
        (pixel, in_bounds) where pixel is a length-C array.
    """
    values, in_bounds, _ = _sample_bilinear(img.data, np.float64(x), np.float64(y))
    return values, bool(in_bounds)


def warp_image(img: ImageBuffer, flow: FlowField) -> tuple[ImageBuffer, np.ndarray]:
    """Backward-warp an image: output pixel p pulls from p + flow(p).

    Args:
        img: Source image to sample.
        flow: Displacement field, same spatial size as img.

    Returns:
        (warped, valid) where valid marks pixels whose sample position was
        inside the image. Out-of-bounds positions hold clamped edge values.
    """
    _check_same_shape(img.shape, flow.shape, "warp_image")
    ys, xs = np.mgrid[0 : img.height, 0 : img.width].astype(np.float64)
    values, in_bounds, _ = _sample_bilinear(img.data, xs + flow.u, ys + flow.v)
    return ImageBuffer(values), in_bounds


def warp_flow(flow_prev: FlowField, flow_back: FlowField) -> FlowField:
    """Bring a past pairwise flow into the current frame's coordinates.

    Each channel of flow_prev is bilinearly sampled at p + flow_back(p).
    The result's validity intersects the in-bounds flags with flow_prev's
    own mask: a pixel is valid only if its sample position was inside the
    grid and every contributing source pixel was valid.

    Args:
        flow_prev: Field to resample (e.g. the flow observed one frame ago).
        flow_back: Field mapping current-frame pixels into flow_prev's frame.

    Returns:
        Resampled field with a validity mask.
    """
    _check_same_shape(flow_prev.shape, flow_back.shape, "warp_flow")
    ys, xs = np.mgrid[0 : flow_prev.height, 0 : flow_prev.width].astype(np.float64)
    data = np.stack([flow_prev.u, flow_prev.v], axis=-1)
    values, in_bounds, corners = _sample_bilinear(data, xs + flow_back.u, ys + flow_back.v)
    valid = in_bounds.copy()
    if flow_prev.valid is not None:
        valid &= _sample_mask(flow_prev.valid, corners)
    return FlowField(u=values[..., 0], v=values[..., 1], valid=valid)


def compose_warp_chain(flows_fwd: list[FlowField], flows_bwd: list[FlowField]) -> FlowField:
    """Iteratively warp the oldest pairwise flow into the newest frame.

    The accumulator starts at flows_fwd[0] (the oldest pairwise flow) and is
    repeatedly warped by each entry of flows_bwd in order, ending in the
    frame the last backward flow starts from. Validity masks intersect at
    every step. A chain with a single backward flow is exactly warp_flow.

    Args:
        flows_fwd: Pairwise forward flows, oldest first; only the first
            entry seeds the composition, later entries document the chain.
        flows_bwd: Backward flows applied in order, each carrying the
            accumulator one frame closer to the present.

    Returns:
        The oldest flow expressed in the final frame's coordinates.
    """
    if not flows_fwd or not flows_bwd:
        raise ValueError("compose_warp_chain: empty chain")
    shape = flows_fwd[0].shape
    for f in list(flows_fwd) + list(flows_bwd):
        _check_same_shape(shape, f.shape, "compose_warp_chain")
    acc = flows_fwd[0]
    for back in flows_bwd:
        acc = warp_flow(acc, back)
    return acc


def brightness_error(I_t: ImageBuffer, I_next: ImageBuffer, flow: FlowField) -> ImageBuffer:
    """Absolute brightness-constancy violation of a flow candidate.

    Warps I_next backward by the flow and takes the per-pixel absolute
    difference against I_t, averaged over color channels to one channel.
    Out-of-bounds samples use clamped edge values, so the map is defined
    everywhere.

    Args:
        I_t: Reference frame.
        I_next: Frame the flow points into.
        flow: Candidate displacement field from I_t to I_next.

    Returns:
        One-channel nonnegative error map.
    """
    _check_same_shape(I_t.shape, I_next.shape, "brightness_error")
    if I_t.channels != I_next.channels:
        raise ValueError(
            f"brightness_error: channel mismatch {I_t.channels} vs {I_next.channels}"
        )
    warped, _ = warp_image(I_next, flow)
    err = np.abs(I_t.data - warped.data).mean(axis=2)
    return ImageBuffer(err)


def flow_magnitude(flow: FlowField) -> ImageBuffer:
    """Per-pixel Euclidean length of the displacement, as a one-channel map."""
    return ImageBuffer(np.hypot(flow.u, flow.v))


def out_of_boundary_mask(gt: FlowField) -> np.ndarray:
    """True where a pixel's ground-truth displacement leaves the image.

    A pixel at p counts as out-of-boundary when p + gt(p) lands outside
    [0, W-1] x [0, H-1].
    """
    ys, xs = np.mgrid[0 : gt.height, 0 : gt.width].astype(np.float64)
    tx = xs + gt.u
    ty = ys + gt.v
    return (tx < 0.0) | (tx > gt.width - 1.0) | (ty < 0.0) | (ty > gt.height - 1.0)
