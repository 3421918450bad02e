"""Pinhole projection helpers with z-buffered splatting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    def check(self, shape) -> None:
        h, w = shape
        if not (0 <= self.cx < w and 0 <= self.cy < h):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside a {w}x{h} image")

    @classmethod
    def default_for(cls, shape) -> "CameraIntrinsics":
        """Roughly 53 degree horizontal field of view centred on the image."""
        h, w = shape
        f = float(max(h, w))
        return cls(f, f, w / 2.0, h / 2.0)

    @classmethod
    def parse(cls, text: str) -> "CameraIntrinsics":
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError("intrinsics must be fx,fy,cx,cy")
        return cls(*parts)

    def rays(self, shape) -> np.ndarray:
        """Per-pixel ray directions with unit z, shape (H, W, 3)."""
        h, w = shape
        v, u = np.mgrid[0:h, 0:w].astype(np.float64)
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones((h, w))], -1)


def unproject(depth: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Depth (z) map to camera-frame points, shape (H, W, 3)."""
    return intr.rays(depth.shape) * depth[..., None]


def project(points: np.ndarray, intr: CameraIntrinsics):
    """Points (..., 3) to pixel coordinates ``(u, v, z)``."""
    z = points[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * points[..., 0] / z + intr.cx
        v = intr.fy * points[..., 1] / z + intr.cy
    return u, v, z


def splat_nearest(u, v, z, shape, min_depth: float = 1e-9):
    """Round to the nearest pixel and keep the closest point per pixel.

    Returns ``(depth, source)`` where ``source`` holds the flat index of the
    winning input point (or -1).
    """
    h, w = shape
    u = np.asarray(u).ravel()
    v = np.asarray(v).ravel()
    z = np.asarray(z).ravel()
    ui = np.rint(u)
    vi = np.rint(v)
    ok = np.isfinite(ui) & np.isfinite(vi) & (z > min_depth)
    ok &= (ui >= 0) & (ui < w) & (vi >= 0) & (vi < h)
    idx = np.flatnonzero(ok)
    flat = vi[idx].astype(np.int64) * w + ui[idx].astype(np.int64)
    # nearest first, then by source index so ties resolve deterministically
    order = np.lexsort((idx, z[idx], flat))
    flat_sorted = flat[order]
    first = np.ones(flat_sorted.size, dtype=bool)
    first[1:] = flat_sorted[1:] != flat_sorted[:-1]
    depth = np.zeros(h * w)
    source = np.full(h * w, -1, dtype=np.int64)
    winners = order[first]
    depth[flat[winners]] = z[idx[winners]]
    source[flat[winners]] = idx[winners]
    return depth.reshape(h, w), source.reshape(h, w)
