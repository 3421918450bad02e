"""Synthetic sparse-depth patterns and noise models.

All samplers take an explicit ``numpy.random.Generator``; identical inputs and
generator state give identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable

import numpy as np
from scipy import ndimage

from .camera import CameraIntrinsics, project, splat_nearest, unproject
from .errors import (
    ClusteringFailed,
    NoPointsGenerated,
    NotEnoughValidPixels,
    ProjectionDegenerate,
)
from .grid import DepthGrid, SparseObservation
from .scalenorm import median

Sampler = Callable[[DepthGrid, np.random.Generator], SparseObservation]

NMS_RADIUS = 4
INPAINT_ITERS = 32
MAX_OUTLIER_FRACTION = 0.1


def count_for(fraction: float, n: int) -> int:
    """Point count for a fraction of ``n``, rounding half to even."""
    return int(round(fraction * n))


def _observation_from(gt: DepthGrid, flat_idx: np.ndarray) -> SparseObservation:
    mask = np.zeros(gt.shape, dtype=bool)
    mask.flat[flat_idx] = True
    return SparseObservation(np.where(mask, gt.values, 0.0), mask)


def _random_pick(candidates: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    if count > candidates.size:
        raise NotEnoughValidPixels(f"need {count} pixels, only {candidates.size} available")
    return rng.choice(candidates, size=count, replace=False)


def sample_random(gt: DepthGrid, density: float, rng: np.random.Generator) -> SparseObservation:
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    count = count_for(density, gt.height * gt.width)
    picked = _random_pick(np.flatnonzero(gt.valid), count, rng)
    return _observation_from(gt, picked)


# ---------------------------------------------------------------- keypoints

def to_gray(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img[..., :3].mean(axis=-1)
    return img


def harris_response(gray: np.ndarray, scales=(1.0, 2.0, 4.0), k: float = 0.04) -> np.ndarray:
    """Scale-normalised Harris response, maximised over ``scales``."""
    gray = np.asarray(gray, dtype=np.float64)
    best = np.full(gray.shape, -np.inf)
    for s in scales:
        smooth = ndimage.gaussian_filter(gray, 0.7 * s, mode="nearest")
        ix = ndimage.sobel(smooth, axis=1, mode="nearest") / 8.0
        iy = ndimage.sobel(smooth, axis=0, mode="nearest") / 8.0
        sxx = ndimage.gaussian_filter(ix * ix, s, mode="nearest")
        syy = ndimage.gaussian_filter(iy * iy, s, mode="nearest")
        sxy = ndimage.gaussian_filter(ix * iy, s, mode="nearest")
        resp = (sxx * syy - sxy * sxy - k * (sxx + syy) ** 2) * s ** 4
        best = np.maximum(best, resp)
    return best


def detect_keypoints(image, max_points: int, radius: int = NMS_RADIUS,
                     rel_threshold: float = 0.01) -> np.ndarray:
    """Harris corners after non-maximum suppression, strongest first.

    Returns an ``(N, 2)`` integer array of ``(row, col)``.
    """
    gray = to_gray(image)
    if min(gray.shape) < 16:
        raise ValueError("keypoint detection needs at least a 16x16 image")
    resp = harris_response(gray)
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    footprint = xx * xx + yy * yy <= radius * radius
    local_max = ndimage.maximum_filter(resp, footprint=footprint, mode="constant", cval=-np.inf)
    peak = resp.max()
    if not peak > 1e-12:
        return np.zeros((0, 2), dtype=np.int64)
    keep = (resp == local_max) & (resp > rel_threshold * peak)
    flat = np.flatnonzero(keep)
    # stable sort keeps raster order among equal responses
    flat = flat[np.argsort(-resp.ravel()[flat], kind="stable")][:max_points]
    return np.stack(np.unravel_index(flat, gray.shape), axis=-1).astype(np.int64)


def sample_keypoints(gt: DepthGrid, image, num_points: int,
                     rng: np.random.Generator) -> SparseObservation:
    """Depth at the strongest corners; any shortfall is filled at random."""
    if to_gray(image).shape != gt.shape:
        raise ValueError("image and depth map differ in shape")
    valid_flat = np.flatnonzero(gt.valid)
    if valid_flat.size < num_points:
        raise NotEnoughValidPixels(f"need {num_points} pixels, only {valid_flat.size} valid")
    corners = detect_keypoints(image, gt.height * gt.width)
    flat = corners[:, 0] * gt.width + corners[:, 1]
    flat = flat[gt.valid.ravel()[flat]][:num_points]
    rest = num_points - flat.size
    if rest:
        candidates = np.setdiff1d(valid_flat, flat, assume_unique=True)
        flat = np.concatenate([flat, _random_pick(candidates, rest, rng)])
    return _observation_from(gt, flat)


# ---------------------------------------------------------------- lidar

def elevation_angles(points: np.ndarray, origin_height: float = 0.0) -> np.ndarray:
    """Elevation (radians, up positive) of camera-frame points seen from a
    sensor displaced ``origin_height`` along camera y (y points down)."""
    x, y, z = points[..., 0], points[..., 1] - origin_height, points[..., 2]
    return np.arctan2(-y, np.hypot(x, z))


def _row_pitch(intr: CameraIntrinsics, shape) -> np.ndarray:
    """Elevation change per image row along each pixel's ray."""
    el = elevation_angles(intr.rays(shape))
    return np.abs(np.gradient(el, axis=0))


def sample_lidar(gt: DepthGrid, intr: CameraIntrinsics, num_lines: int,
                 rng: np.random.Generator, origin_jitter: float = 0.05,
                 angle_shift: float | None = None) -> SparseObservation:
    """Simulated spinning LiDAR with ``num_lines`` beams.

    The sensor sits ``U(-origin_jitter, origin_jitter) * median depth`` above or
    below the camera; beams are equally spaced over the scene's elevation range
    and moved together by ``angle_shift`` beam spacings (drawn from
    ``U(-0.5, 0.5)`` when not given). A pixel is hit when its elevation lies
    within half a pixel pitch of a beam.
    """
    if not 4 <= num_lines <= 128:
        raise ValueError("num_lines must lie in [4, 128]")
    intr.check(gt.shape)
    depth = gt.masked(0.0)
    offset = rng.uniform(-origin_jitter, origin_jitter) * median(gt.values[gt.valid])
    if angle_shift is None:
        angle_shift = rng.uniform(-0.5, 0.5)
    el = elevation_angles(unproject(depth, intr), offset)
    lo, hi = el[gt.valid].min(), el[gt.valid].max()
    if not hi > lo:
        raise NoPointsGenerated("scene spans no elevation range")
    spacing = (hi - lo) / max(num_lines - 1, 1)
    beams = lo + (np.arange(num_lines) + angle_shift) * spacing
    nearest = np.clip(np.rint((el - beams[0]) / spacing), 0, num_lines - 1)
    dist = np.abs(el - (beams[0] + nearest * spacing))
    hit = gt.valid & (dist <= 0.5 * _row_pitch(intr, gt.shape))
    if not hit.any():
        raise NoPointsGenerated("no pixel falls on a beam")
    return _observation_from(gt, np.flatnonzero(hit))


def estimate_line_count(elevations: np.ndarray) -> int:
    """Count equally spaced beams from point elevations.

    Elevations are split into runs at clear gaps; the beam spacing is the
    median distance between run centres, which tolerates the odd run split
    or lost at the edge of the field of view.
    """
    el = np.sort(np.asarray(elevations, dtype=np.float64).ravel())
    if el.size < 2:
        return int(el.size)
    gaps = np.diff(el)
    thr = max(10.0 * float(np.median(gaps)), 0.25 * float(gaps.max()))
    if thr <= 0:
        return 1
    splits = np.flatnonzero(gaps > thr) + 1
    centres = np.array([run.mean() for run in np.split(el, splits)])
    if centres.size < 3:
        return int(centres.size)
    spacing = float(np.median(np.diff(centres)))
    return int(round((centres[-1] - centres[0]) / spacing)) + 1


def kmeans_1d(values: np.ndarray, k: int, max_iter: int = 100):
    """Lloyd iterations in 1-D from quantile seeds; returns (centres, labels).

    An emptied cluster is reseeded at the point farthest from its centre.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if k < 1 or np.unique(v).size < k:
        raise ClusteringFailed(f"cannot form {k} clusters from {np.unique(v).size} distinct values")
    centres = np.quantile(v, (np.arange(k) + 0.5) / k)
    labels = None
    for _ in range(max_iter):
        centres = np.sort(centres)
        bounds = 0.5 * (centres[1:] + centres[:-1])
        new = np.searchsorted(bounds, v)
        counts = np.bincount(new, minlength=k)
        for _ in range(k):
            empty = np.flatnonzero(counts == 0)
            if empty.size == 0:
                break
            far = int(np.argmax(np.abs(v - centres[new])))
            centres[empty[0]] = v[far]
            centres = np.sort(centres)
            new = np.searchsorted(0.5 * (centres[1:] + centres[:-1]), v)
            counts = np.bincount(new, minlength=k)
        if np.any(counts == 0):
            raise ClusteringFailed("empty cluster")
        centres = np.bincount(new, weights=v, minlength=k) / counts
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return centres, labels


def subsample_lines(obs: SparseObservation, intr: CameraIntrinsics, target_lines: int,
                    source_lines: int | None = None,
                    origin_height: float = 0.0) -> SparseObservation:
    """Thin a LiDAR scan by clustering point elevations and keeping every
    ``k // target_lines``-th beam (at most ``target_lines`` of them)."""
    if obs.count == 0:
        raise ClusteringFailed("no points to cluster")
    rows, cols = np.nonzero(obs.mask)
    pts = intr.rays(obs.shape)[rows, cols] * obs.values[rows, cols][:, None]
    el = elevation_angles(pts, origin_height)
    k = source_lines or estimate_line_count(el)
    if target_lines == k:
        return obs
    if not 1 <= target_lines < k:
        raise ValueError(f"target_lines={target_lines} must be below the {k} source lines")
    _, labels = kmeans_1d(el, k)
    step = k // target_lines
    kept_clusters = np.arange(0, k, step)[:target_lines]
    keep = np.isin(labels, kept_clusters)
    mask = np.zeros(obs.shape, dtype=bool)
    mask[rows[keep], cols[keep]] = True
    return SparseObservation(np.where(mask, obs.values, 0.0), mask,
                             np.where(mask, obs.confidence, 0.0))


# ---------------------------------------------------------------- noise

def inject_outliers(obs: SparseObservation, fraction: float, gt: DepthGrid,
                    rng: np.random.Generator):
    """Replace ``round(fraction * N)`` points by depths drawn uniformly between
    the 5th and 95th percentiles of ``gt``. Returns ``(obs, outlier_mask)``."""
    if not 0 <= fraction <= MAX_OUTLIER_FRACTION:
        raise ValueError(f"fraction must lie in [0, {MAX_OUTLIER_FRACTION}]")
    outliers = np.zeros(obs.shape, dtype=bool)
    n = count_for(fraction, obs.count)
    if n == 0:
        return obs, outliers
    lo, hi = np.percentile(gt.values[gt.valid], [5, 95])
    picked = rng.choice(np.flatnonzero(obs.mask), size=n, replace=False)
    values = obs.values.copy()
    values.flat[picked] = rng.uniform(lo, hi, size=n)
    outliers.flat[picked] = True
    return SparseObservation(values, obs.mask, obs.confidence), outliers


def inpaint_holes(depth: np.ndarray, valid: np.ndarray, iterations: int = INPAINT_ITERS):
    """Fill holes from the mean of valid 8-neighbours, one ring per iteration."""
    depth = np.where(valid, depth, 0.0)
    valid = valid.copy()
    kernel = np.ones((3, 3))
    kernel[1, 1] = 0.0
    for _ in range(iterations):
        if valid.all():
            break
        total = ndimage.correlate(depth, kernel, mode="constant")
        count = ndimage.correlate(valid.astype(np.float64), kernel, mode="constant")
        fill = ~valid & (count > 0)
        if not fill.any():
            break
        depth[fill] = total[fill] / count[fill]
        valid |= fill
    return depth, valid


def default_baseline(gt: DepthGrid) -> float:
    """1% of the median depth on each axis."""
    return 0.01 * median(gt.values[gt.valid]) * np.sqrt(3.0)


def boundary_noise(gt: DepthGrid, intr: CameraIntrinsics, baseline_magnitude: float | None,
                   rng: np.random.Generator, sampler: Sampler) -> SparseObservation:
    """Sample through a displaced virtual sensor to mimic boundary bleeding.

    ``gt`` is re-rendered from a viewpoint offset by ``baseline_magnitude``
    (each axis ``+-b/sqrt(3)``), holes are inpainted, ``sampler`` runs in
    that view and the samples are projected back with a z-buffer.
    """
    intr.check(gt.shape)
    if baseline_magnitude is None:
        baseline_magnitude = default_baseline(gt)
    if baseline_magnitude < 0:
        raise ValueError("baseline_magnitude must be non-negative")
    if baseline_magnitude == 0:
        return sampler(gt, rng)
    offset = rng.choice([-1.0, 1.0], size=3) * baseline_magnitude / np.sqrt(3.0)

    rows, cols = np.nonzero(gt.valid)
    pts = unproject(gt.masked(0.0), intr)[rows, cols] - offset
    u, v, z = project(pts, intr)
    virt, _ = splat_nearest(u, v, z, gt.shape)
    hit = virt > 0
    if not hit.any():
        raise ProjectionDegenerate("no point lands in the virtual view")
    virt, filled = inpaint_holes(virt, hit)
    virtual_gt = DepthGrid(virt, filled)

    sampled = sampler(virtual_gt, rng)
    srows, scols = np.nonzero(sampled.mask)
    back = intr.rays(gt.shape)[srows, scols] * sampled.values[srows, scols][:, None] + offset
    u, v, z = project(back, intr)
    depth, _ = splat_nearest(u, v, z, gt.shape)
    mask = depth > 0
    if not mask.any():
        raise ProjectionDegenerate("no sample projects back into the image")
    return SparseObservation(depth, mask)


# ---------------------------------------------------------------- specs

@dataclass(frozen=True)
class PatternSpec:
    kind: str = "random"
    density: float | None = None
    num_points: int | None = None
    num_lines: int | None = None
    outlier_fraction: float = 0.0
    boundary_noise: bool = False
    seed: int = 0

    def __post_init__(self):
        required = {"random": "density", "keypoint": "num_points", "lidar": "num_lines"}
        if self.kind not in required:
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        if getattr(self, required[self.kind]) is None:
            raise ValueError(f"{self.kind} pattern needs {required[self.kind]}")
        if self.density is not None and not 0 < self.density <= 1:
            raise ValueError("density must lie in (0, 1]")
        if self.num_lines is not None and not 4 <= self.num_lines <= 128:
            raise ValueError("num_lines must lie in [4, 128]")
        if not 0 <= self.outlier_fraction <= MAX_OUTLIER_FRACTION:
            raise ValueError(f"outlier_fraction must lie in [0, {MAX_OUTLIER_FRACTION}]")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                lines.append(f"{f.name}={str(value).lower() if isinstance(value, bool) else value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PatternSpec":
        types = {"kind": str, "density": float, "num_points": int, "num_lines": int,
                 "outlier_fraction": float, "seed": int}
        kwargs = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "boundary_noise":
                kwargs[key] = value.lower() in ("1", "true", "yes")
            elif key in types:
                kwargs[key] = types[key](value)
            else:
                raise ValueError(f"unknown pattern key {key!r}")
        return cls(**kwargs)


def generate(gt: DepthGrid, spec: PatternSpec, image=None,
             intr: CameraIntrinsics | None = None):
    """Run a full pattern spec. Returns ``(obs, outlier_mask)``."""
    rng = np.random.default_rng(spec.seed)
    intr = intr or CameraIntrinsics.default_for(gt.shape)
    if spec.kind == "random":
        def sampler(g, r):
            return sample_random(g, spec.density, r)
    elif spec.kind == "keypoint":
        texture = image if image is not None else np.log(gt.masked(1.0))

        def sampler(g, r):
            return sample_keypoints(g, texture, spec.num_points, r)
    else:
        def sampler(g, r):
            return sample_lidar(g, intr, spec.num_lines, r)
    if spec.boundary_noise:
        obs = boundary_noise(gt, intr, None, rng, sampler)
    else:
        obs = sampler(gt, rng)
    return inject_outliers(obs, spec.outlier_fraction, gt, rng)
