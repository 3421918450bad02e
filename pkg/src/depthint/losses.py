"""Training objectives with analytic gradients.

Every loss takes a ``space`` flag: ``"linear"`` compares depths directly,
``"log"`` compares log-depths (gradients are still returned w.r.t. the linear
prediction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfidenceOutOfRange, EmptyMask, ShapeMismatch
from .grid import avg_pool, check_divisible, diff_adjoint, finite_diff, pool_adjoint

L1_WEIGHT = 1.0
LAPLACIAN_WEIGHT = 0.5
GRADIENT_MATCHING_WEIGHT = 2.0
GM_SCALES = 4


@dataclass(frozen=True)
class LaplacianParams:
    mean: np.ndarray
    gamma: np.ndarray
    gamma_min: float = -2.0

    @property
    def scale(self) -> np.ndarray:
        """Effective b = exp(max(gamma, gamma_min))."""
        return np.exp(np.maximum(np.asarray(self.gamma, dtype=np.float64), self.gamma_min))


def _prepare(pred, gt, valid_mask, space):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    mask = np.ones(pred.shape, dtype=bool) if valid_mask is None else np.asarray(valid_mask, bool)
    if mask.shape != pred.shape:
        raise ShapeMismatch("mask shape differs from pred")
    n = int(mask.sum())
    if n == 0:
        raise EmptyMask("no valid pixels")
    if space == "linear":
        return pred, gt, mask, n, np.ones_like(pred)
    if space == "log":
        safe_pred = np.where(mask, pred, 1.0)
        safe_gt = np.where(mask, gt, 1.0)
        return np.log(safe_pred), np.log(safe_gt), mask, n, 1.0 / safe_pred
    raise ValueError(f"unknown space {space!r}")


def l1_loss(pred, gt, valid_mask=None, space="linear"):
    """Mean absolute error over valid pixels and its (sub)gradient."""
    p, g, mask, n, chain = _prepare(pred, gt, valid_mask, space)
    diff = np.where(mask, p - g, 0.0)
    value = float(np.abs(diff).sum() / n)
    grad = np.sign(diff) / n * chain
    return value, grad


def laplacian_nll(params: LaplacianParams, gt, valid_mask=None, space="linear"):
    """Laplace negative log-likelihood ``log(2b) + |gt - mean| / b``.

    Returns ``(value, grad_mean, grad_gamma)``. The gradient w.r.t. gamma is
    zero wherever the clamp is active.
    """
    p, g, mask, n, chain = _prepare(params.mean, gt, valid_mask, space)
    gamma = np.asarray(params.gamma, dtype=np.float64)
    if gamma.shape != p.shape:
        raise ShapeMismatch("gamma shape differs from mean")
    eff = np.maximum(gamma, params.gamma_min)
    inv_b = np.exp(-eff)
    resid = np.where(mask, g - p, 0.0)
    abs_r = np.abs(resid)
    per_pixel = np.log(2.0) + eff + abs_r * inv_b
    value = float(per_pixel[mask].sum() / n)
    grad_mean = np.where(mask, -np.sign(resid) * inv_b / n, 0.0) * chain
    active = mask & (gamma > params.gamma_min)
    grad_gamma = np.where(active, (1.0 - abs_r * inv_b) / n, 0.0)
    return value, grad_mean, grad_gamma


def gradient_matching_loss(pred, gt, space="linear", num_scales=GM_SCALES):
    """Multi-scale total variation of the residual ``pred - gt``.

    The residual is average-pooled by 1, 2, 4, 8 and the absolute forward
    differences at every scale are summed and divided by the full-resolution
    pixel count.
    """
    p, g, _, _, chain = _prepare(pred, gt, None, space)
    h, w = p.shape
    check_divisible(p.shape, 2 ** (num_scales - 1))
    resid = p - g
    value = 0.0
    grad = np.zeros_like(resid)
    for k in range(num_scales):
        f = 2 ** k
        gx, gy = finite_diff(avg_pool(resid, f))
        value += np.abs(gx).sum() + np.abs(gy).sum()
        grad += pool_adjoint(diff_adjoint(np.sign(gx), np.sign(gy)), f)
    hw = h * w
    return float(value / hw), grad / hw * chain


def combined_loss(pred, laplacian: LaplacianParams, gt, mask=None, space="linear") -> float:
    """``L1 + 0.5 * L_lap + 2.0 * L_gm``; the gradient-matching term uses the full grid."""
    l1, _ = l1_loss(pred, gt, mask, space)
    lap, _, _ = laplacian_nll(laplacian, gt, mask, space)
    gm, _ = gradient_matching_loss(pred, gt, space)
    return L1_WEIGHT * l1 + LAPLACIAN_WEIGHT * lap + GRADIENT_MATCHING_WEIGHT * gm


def bce_confidence(pred_conf, is_outlier, mask=None) -> float:
    """Binary cross-entropy of the confidence map; outliers carry label 0."""
    c = np.asarray(pred_conf, dtype=np.float64)
    y = 1.0 - np.asarray(is_outlier, dtype=np.float64)
    if c.shape != y.shape:
        raise ShapeMismatch("confidence and labels differ in shape")
    sel = np.ones(c.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    c, y = c[sel], y[sel]
    if c.size == 0:
        raise EmptyMask("no points to score")
    if np.any(c <= 0) or np.any(c >= 1):
        raise ConfidenceOutOfRange("confidences must lie strictly inside (0, 1)")
    return float(-np.mean(y * np.log(c) + (1.0 - y) * np.log1p(-c)))
