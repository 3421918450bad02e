"""Depth metrics, least-squares scale/shift alignment and GT cleanup."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateFit, EmptyMask, NonPositiveGT, ShapeMismatch
from .grid import DepthGrid, SparseObservation

DELTA1_THRESHOLD = 1.25
METRIC_FIELDS = ("rmse", "mae", "rel", "delta1", "irmse", "imae", "valid_pixel_count")

# inverse-depth unit -> factor applied to 1/depth
INVERSE_UNITS = {"1/km": 1000.0, "1/unit": 1.0}


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mae: float
    rel: float
    delta1: float
    irmse: float
    imae: float
    valid_pixel_count: int
    rmse_scale_divisor: float = 1.0

    def as_row(self) -> list:
        return [getattr(self, f) for f in METRIC_FIELDS]

    def to_text(self) -> str:
        return "\n".join(f"{k}={v!r}" for k, v in asdict(self).items()) + "\n"


def compute_metrics(pred, gt, valid_mask=None, rmse_scale_divisor: float = 1.0,
                    inverse_unit: str = "1/km") -> MetricsReport:
    """Metrics over valid pixels. iRMSE/iMAE compare inverse depths; with
    ``inverse_unit="1/km"`` inputs are taken to be in metres."""
    pred = np.asarray(getattr(pred, "values", pred), dtype=np.float64)
    gt_arr = np.asarray(getattr(gt, "values", gt), dtype=np.float64)
    if pred.shape != gt_arr.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt_arr.shape}")
    if valid_mask is None:
        valid_mask = gt.valid if isinstance(gt, DepthGrid) else np.ones(gt_arr.shape, bool)
    mask = np.asarray(valid_mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("no valid pixels to evaluate")
    p, g = pred[mask], gt_arr[mask]
    if np.any(~(g > 0)):
        raise NonPositiveGT("ground truth must be positive on valid pixels")
    if not rmse_scale_divisor > 0:
        raise ValueError("rmse_scale_divisor must be positive")
    factor = INVERSE_UNITS[inverse_unit]
    err = p - g
    # non-positive predictions fail delta1 and count as zero inverse depth
    pos = p > 0
    safe_p = np.where(pos, p, 1.0)
    ratio = np.where(pos, np.maximum(safe_p / g, g / safe_p), np.inf)
    inv_err = factor * (np.where(pos, 1.0 / safe_p, 0.0) - 1.0 / g)
    return MetricsReport(
        rmse=float(np.sqrt(np.mean(err ** 2))) / rmse_scale_divisor,
        mae=float(np.mean(np.abs(err))),
        rel=float(np.mean(np.abs(err) / g)),
        delta1=float(np.mean(ratio < DELTA1_THRESHOLD)),
        irmse=float(np.sqrt(np.mean(inv_err ** 2))),
        imae=float(np.mean(np.abs(inv_err))),
        valid_pixel_count=int(mask.sum()),
        rmse_scale_divisor=float(rmse_scale_divisor),
    )


class Alignment(NamedTuple):
    scale: float
    shift: float
    aligned: np.ndarray
    degenerate: bool


def align_scale_shift(pred, sparse: SparseObservation, space: str = "depth") -> Alignment:
    """Least-squares ``s * x + t`` matching the sparse points.

    ``x`` is the prediction (``space="depth"``) or its reciprocal with targets
    also inverted (``space="disparity"``). The aligned map is returned as depth.
    """
    pred = np.asarray(getattr(pred, "values", pred), dtype=np.float64)
    if pred.shape != sparse.shape:
        raise ShapeMismatch("prediction and sparse map differ in shape")
    sel = sparse.mask & np.isfinite(pred) & (pred > 0)
    if sel.sum() < 2:
        raise DegenerateFit("need at least two sparse points to fit scale and shift")
    if space == "depth":
        x, y = pred[sel], sparse.values[sel]
    elif space == "disparity":
        x, y = 1.0 / pred[sel], 1.0 / sparse.values[sel]
    else:
        raise ValueError(f"unknown alignment space {space!r}")
    degenerate = bool(np.ptp(x) == 0)
    if degenerate:
        warnings.warn("prediction is constant at the sparse points; fitting scale only",
                      RuntimeWarning, stacklevel=2)
        s, t = float(x @ y / (x @ x)), 0.0
    else:
        a = np.stack([x, np.ones_like(x)], axis=1)
        (s, t), *_ = np.linalg.lstsq(a, y, rcond=None)
        s, t = float(s), float(t)
    if space == "depth":
        aligned = s * pred + t
    else:
        with np.errstate(divide="ignore"):
            disp = s / pred + t
            aligned = np.where(disp > 0, 1.0 / disp, np.inf)
    return Alignment(s, t, aligned, degenerate)


def filter_gt_neighbors(gt: DepthGrid, rel_threshold: float) -> DepthGrid:
    """Invalidate pixels that differ from any valid 8-neighbour by more than
    ``rel_threshold`` of their own depth."""
    if not rel_threshold > 0:
        raise ValueError("rel_threshold must be positive")
    h, w = gt.shape
    d = gt.values
    pad_d = np.pad(np.where(gt.valid, d, 0.0), 1)
    pad_v = np.pad(gt.valid, 1)
    bad = np.zeros((h, w), dtype=bool)
    safe = np.where(gt.valid, d, 1.0)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            nd = pad_d[1 + di:1 + di + h, 1 + dj:1 + dj + w]
            nv = pad_v[1 + di:1 + di + h, 1 + dj:1 + dj + w]
            bad |= nv & (np.abs(safe - nd) > rel_threshold * safe)
    return DepthGrid(d, gt.valid & ~bad, gt.space)
