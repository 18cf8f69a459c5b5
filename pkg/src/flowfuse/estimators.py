"""Pluggable two-frame flow sources: classical estimators and file ingestion.

Every estimator sits behind the same interface so the fusion pipeline does
not care where pairwise flow comes from: a coarse-to-fine Horn-Schunck
solver, an iterative pyramidal Lucas-Kanade solver, or flow precomputed by
an external method and stored on disk. Estimators are immutable after
construction and estimate() is reentrant.
"""

from __future__ import annotations

import os
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import FlowField, ImageBuffer, _sample_bilinear
from .flowio import read_flo, read_kitti_png, to_grayscale

__all__ = [
    "TwoFrameEstimator",
    "HsParams",
    "LkParams",
    "HornSchunck",
    "LucasKanade",
    "PrecomputedSource",
    "horn_schunck",
    "lucas_kanade",
    "precomputed_source",
]


class TwoFrameEstimator(ABC):
    """Interface for anything that maps a frame pair to a flow field.

    Implementations must be deterministic (same inputs and parameters give
    an identical field) and must return a field matching the input size.
    """

    name: str = "estimator"

    @abstractmethod
    def estimate(
        self,
        I_a: ImageBuffer,
        I_b: ImageBuffer,
        pair: tuple[int, int] | None = None,
    ) -> FlowField:
        """Estimate flow from I_a to I_b.

        Args:
            I_a: Source frame.
            I_b: Target frame.
            pair: Optional (source, target) frame indices; only file-backed
                sources need them, classical estimators ignore them.
        """


@dataclass(frozen=True)
class HsParams:
    """Horn-Schunck settings. alpha weights smoothness on [0, 1] intensities."""

    alpha: float = 1.0
    iterations: int = 200
    pyramid_levels: int = 4
    warps_per_level: int = 1

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.iterations < 1 or self.pyramid_levels < 1 or self.warps_per_level < 1:
            raise ValueError("iterations, pyramid_levels and warps_per_level must be >= 1")


@dataclass(frozen=True)
class LkParams:
    """Pyramidal Lucas-Kanade settings.

    min_eigen_threshold applies to the smaller eigenvalue of the windowed
    mean structure tensor; pixels below it keep the coarser-level estimate
    and come back flagged invalid.
    """

    window_radius: int = 4
    pyramid_levels: int = 4
    iterations_per_level: int = 5
    min_eigen_threshold: float = 1e-4

    def __post_init__(self) -> None:
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if self.pyramid_levels < 1 or self.iterations_per_level < 1:
            raise ValueError("pyramid_levels and iterations_per_level must be >= 1")
        if self.min_eigen_threshold < 0:
            raise ValueError("min_eigen_threshold must be >= 0")


def _gray_plane(img: ImageBuffer) -> np.ndarray:
    return to_grayscale(img).plane(0)


def _central_diff(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with replicate borders: (d/dx, d/dy)."""
    padded = np.pad(img, 1, mode="edge")
    ix = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    iy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return ix, iy


def _downsample2(img: np.ndarray) -> np.ndarray:
    """Antialiased factor-2 downsampling."""
    smoothed = ndimage.gaussian_filter(img, sigma=1.0, mode="nearest")
    return smoothed[::2, ::2]


def _resize_bilinear(arr: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Resize a 2-D array with clamped bilinear sampling (pixel centers)."""
    h_out, w_out = shape
    h_in, w_in = arr.shape
    ys = (np.arange(h_out, dtype=np.float64) + 0.5) * (h_in / h_out) - 0.5
    xs = (np.arange(w_out, dtype=np.float64) + 0.5) * (w_in / w_out) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    values, _, _ = _sample_bilinear(arr[:, :, None], gx, gy)
    return values[..., 0]


def _warp_plane(plane: np.ndarray, u: np.ndarray, v: np.ndarray):
    h, w = plane.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    values, inb, _ = _sample_bilinear(plane[:, :, None], xs + u, ys + v)
    return values[..., 0], inb


def _pyramid(plane: np.ndarray, levels: int, min_size: int = 16) -> list[np.ndarray]:
    """Coarse-to-fine pyramid; stops before a level gets uselessly small."""
    out = [plane]
    for _ in range(levels - 1):
        if min(out[-1].shape) < 2 * min_size:
            break
        out.append(_downsample2(out[-1]))
    return out[::-1]


def _upsample_flow(u: np.ndarray, v: np.ndarray, shape: tuple[int, int]):
    su = shape[1] / u.shape[1]
    sv = shape[0] / u.shape[0]
    return _resize_bilinear(u, shape) * su, _resize_bilinear(v, shape) * sv


def _neighbor_avg(x: np.ndarray) -> np.ndarray:
    """4-neighbor average with replicate borders."""
    p = np.pad(x, 1, mode="edge")
    return (p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]) / 4.0


class HornSchunck(TwoFrameEstimator):
    """Coarse-to-fine Horn-Schunck with warping between levels.

    At each level the flow is linearized around the warp estimate u0 and
    relaxed with the classic Jacobi update
    u <- ubar - Ix (Ix (ubar - u0) + Iy (vbar - v0) + It) / (alpha^2 + Ix^2 + Iy^2)
    where ubar, vbar are 4-neighbor averages and It comes from the warped
    pair.
    """

    name = "horn_schunck"

    def __init__(self, params: HsParams | None = None):
        self.params = params or HsParams()

    def estimate(self, I_a, I_b, pair=None) -> FlowField:
        if I_a.shape != I_b.shape:
            raise ValueError(f"estimate: dimension mismatch {I_a.shape} vs {I_b.shape}")
        p = self.params
        pyr_a = _pyramid(_gray_plane(I_a), p.pyramid_levels)
        pyr_b = _pyramid(_gray_plane(I_b), p.pyramid_levels)
        u = np.zeros_like(pyr_a[0])
        v = np.zeros_like(pyr_a[0])
        for level, (a, b) in enumerate(zip(pyr_a, pyr_b)):
            if level > 0:
                u, v = _upsample_flow(u, v, a.shape)
            for _ in range(p.warps_per_level):
                u, v = self._relax(a, b, u, v)
        return FlowField(u=u, v=v)

    def _relax(self, a, b, u0, v0):
        p = self.params
        bw, inb = _warp_plane(b, u0, v0)
        # Out-of-frame samples carry no information; let smoothness fill in.
        it0 = np.where(inb, bw - a, 0.0)
        ix, iy = _central_diff((a + bw) / 2.0)
        denom = p.alpha**2 + ix**2 + iy**2
        u, v = u0, v0
        for _ in range(p.iterations):
            ubar = _neighbor_avg(u)
            vbar = _neighbor_avg(v)
            t = (ix * (ubar - u0) + iy * (vbar - v0) + it0) / denom
            u = ubar - ix * t
            v = vbar - iy * t
        return u, v


class LucasKanade(TwoFrameEstimator):
    """Dense iterative pyramidal Lucas-Kanade.

    Solves the windowed 2x2 normal equations at every pixel, warping the
    target frame between iterations. Pixels whose structure tensor is too
    close to singular keep the flow inherited from the coarser level and
    are flagged invalid.
    """

    name = "lucas_kanade"

    def __init__(self, params: LkParams | None = None):
        self.params = params or LkParams()

    def estimate(self, I_a, I_b, pair=None) -> FlowField:
        if I_a.shape != I_b.shape:
            raise ValueError(f"estimate: dimension mismatch {I_a.shape} vs {I_b.shape}")
        p = self.params
        size = 2 * p.window_radius + 1
        pyr_a = _pyramid(_gray_plane(I_a), p.pyramid_levels, min_size=2 * size)
        pyr_b = _pyramid(_gray_plane(I_b), p.pyramid_levels, min_size=2 * size)
        u = np.zeros_like(pyr_a[0])
        v = np.zeros_like(pyr_a[0])
        good = np.ones(pyr_a[0].shape, dtype=bool)
        for level, (a, b) in enumerate(zip(pyr_a, pyr_b)):
            if level > 0:
                u, v = _upsample_flow(u, v, a.shape)
            u, v, good = self._solve_level(a, b, u, v)
        return FlowField(u=u, v=v, valid=good)

    def _solve_level(self, a, b, u, v):
        p = self.params
        size = 2 * p.window_radius + 1
        ix, iy = _central_diff(a)

        def box(x):
            return ndimage.uniform_filter(x, size=size, mode="nearest")

        sxx = box(ix * ix)
        sxy = box(ix * iy)
        syy = box(iy * iy)
        trace = sxx + syy
        det = sxx * syy - sxy * sxy
        lam_min = trace / 2.0 - np.sqrt(np.maximum(trace**2 / 4.0 - det, 0.0))
        good = lam_min >= p.min_eigen_threshold
        # The window cannot be measured where it overlaps the border, and
        # border gradients are unreliable; those pixels keep the inherited
        # estimate (like low-texture ones) instead of destabilizing the
        # iteration.
        band = p.window_radius + 1
        if min(a.shape) > 2 * band:
            edge = np.ones_like(good)
            edge[band:-band, band:-band] = False
            good &= ~edge
        safe_det = np.where(good, det, 1.0)

        def residual(cu, cv):
            bw, inb = _warp_plane(b, cu, cv)
            # Out-of-frame samples carry no information; keep the inherited
            # estimate there instead of chasing clamped edge values.
            it = np.where(inb, bw - a, 0.0)
            return it, box(it * it)

        limit = float(p.window_radius)
        for _ in range(p.iterations_per_level):
            it, res = residual(u, v)
            bx = box(ix * it)
            by = box(iy * it)
            du = np.clip(-(syy * bx - sxy * by) / safe_det, -limit, limit)
            dv = np.clip(-(sxx * by - sxy * bx) / safe_det, -limit, limit)
            du = np.where(good, du, 0.0)
            dv = np.where(good, dv, 0.0)
            # Guarded Gauss-Newton with a short step cascade: keep the first
            # fraction of the step that lowers the windowed residual, else
            # stay put. Unguarded steps random-walk once a pixel leaves the
            # linearization basin and then poison its window neighbors.
            best_u, best_v, best_res = u, v, res
            for scale in (1.0, 0.5, 0.25):
                u_try = u + scale * du
                v_try = v + scale * dv
                _, res_try = residual(u_try, v_try)
                better = res_try < best_res
                best_u = np.where(better, u_try, best_u)
                best_v = np.where(better, v_try, best_v)
                best_res = np.where(better, res_try, best_res)
            u, v = best_u, best_v
        # Median filtering between levels suppresses per-pixel jitter from
        # the guarded steps and keeps the estimate translation-covariant.
        u = ndimage.median_filter(u, size=5, mode="nearest")
        v = ndimage.median_filter(v, size=5, mode="nearest")
        return u, v, good


class PrecomputedSource(TwoFrameEstimator):
    """Flow fields computed elsewhere, loaded from a directory.

    Files are keyed by (source frame, target frame) through a printf-style
    pattern, by default ``flow_%06d_%06d`` with extension .flo or .png
    (KITTI encoding). estimate() requires the pair indices.
    """

    name = "precomputed"

    def __init__(self, directory: str | os.PathLike, pattern: str = "flow_%06d_%06d"):
        self.directory = str(directory)
        self.pattern = pattern

    def flow_between(self, src: int, dst: int) -> FlowField:
        stem = os.path.join(self.directory, self.pattern % (src, dst))
        for ext, reader in ((".flo", read_flo), (".png", read_kitti_png)):
            path = stem + ext
            if os.path.exists(path):
                return reader(path)
        raise FileNotFoundError(f"flow not found: expected {stem}.flo or {stem}.png")

    def estimate(self, I_a, I_b, pair=None) -> FlowField:
        if pair is None:
            raise ValueError("precomputed source requires frame-pair indices")
        flow = self.flow_between(*pair)
        if flow.shape != I_a.shape:
            raise ValueError(
                f"stored flow {flow.shape} does not match images {I_a.shape} for pair {pair}"
            )
        return flow


def horn_schunck(I_a: ImageBuffer, I_b: ImageBuffer, params: HsParams | None = None) -> FlowField:
    """One-shot Horn-Schunck estimate (see HornSchunck)."""
    return HornSchunck(params).estimate(I_a, I_b)


def lucas_kanade(I_a: ImageBuffer, I_b: ImageBuffer, params: LkParams | None = None) -> FlowField:
    """One-shot Lucas-Kanade estimate (see LucasKanade)."""
    return LucasKanade(params).estimate(I_a, I_b)


def precomputed_source(directory: str | os.PathLike, pattern: str = "flow_%06d_%06d") -> PrecomputedSource:
    """Estimator facade over a directory of stored flow files."""
    return PrecomputedSource(directory, pattern)
