"""Dense depth containers and the linear operators the integrator is built from.

Arrays are indexed ``[row, col]``. The horizontal difference ``gx`` compares a
pixel with its left neighbour and the vertical difference ``gy`` with the pixel
above it, so ``gx[:, 0]`` and ``gy[0, :]`` carry no constraint and are kept at 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionNotDivisible, NonPositiveDepth, ShapeMismatch

LINEAR = "linear"
LOG = "log"


@dataclass(frozen=True)
class DepthGrid:
    values: np.ndarray
    valid: np.ndarray | None = None
    space: str = LINEAR

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or min(values.shape) < 2:
            raise ShapeMismatch(f"depth grid must be 2-D and at least 2x2, got {values.shape}")
        if self.valid is None:
            valid = np.isfinite(values)
            if self.space == LINEAR:
                valid &= values > 0
        else:
            valid = np.array(self.valid, dtype=bool)
            if valid.shape != values.shape:
                raise ShapeMismatch("valid mask shape differs from values")
        if self.space not in (LINEAR, LOG):
            raise ValueError(f"unknown space {self.space!r}")
        v = values[valid]
        if not np.all(np.isfinite(v)):
            raise ValueError("valid values must be finite")
        if self.space == LINEAR and np.any(v <= 0):
            raise NonPositiveDepth("linear-space depths must be strictly positive")
        values.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def is_dense(self) -> bool:
        return bool(self.valid.all())

    def masked(self, fill: float = 0.0) -> np.ndarray:
        """Copy of the values with invalid pixels replaced by ``fill``."""
        return np.where(self.valid, self.values, fill)


@dataclass(frozen=True)
class SparseObservation:
    """Sparse depth samples with a validity mask and per-point confidence.

    Values outside the mask are stored as 0 and never read.
    """

    values: np.ndarray
    mask: np.ndarray
    confidence: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        mask = np.array(self.mask, dtype=bool)
        if values.ndim != 2 or mask.shape != values.shape:
            raise ShapeMismatch("values and mask must be 2-D arrays of one shape")
        v = values[mask]
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise NonPositiveDepth("observed depths must be positive and finite")
        if self.confidence is None:
            conf = mask.astype(np.float64)
        else:
            conf = np.array(self.confidence, dtype=np.float64)
            if conf.shape != values.shape:
                raise ShapeMismatch("confidence shape differs from values")
            c = conf[mask]
            if np.any(c < 0) or np.any(c > 1):
                raise ValueError("confidence must lie in [0, 1]")
            conf = np.where(mask, conf, 0.0)
        values = np.where(mask, values, 0.0)
        for a in (values, mask, conf):
            a.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "confidence", conf)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def scaled(self, beta: float) -> "SparseObservation":
        return SparseObservation(self.values * beta, self.mask, self.confidence)

    @classmethod
    def from_points(cls, shape, rows, cols, values, confidence=None) -> "SparseObservation":
        vals = np.zeros(shape)
        mask = np.zeros(shape, dtype=bool)
        vals[rows, cols] = values
        mask[rows, cols] = True
        conf = None
        if confidence is not None:
            conf = np.zeros(shape)
            conf[rows, cols] = confidence
        return cls(vals, mask, conf)


@dataclass(frozen=True)
class GradientPyramid:
    """Per-level ``(gx, gy)`` log-depth differences; level 0 is full resolution."""

    levels: tuple = field(default_factory=tuple)

    def __post_init__(self):
        levels = tuple((np.asarray(gx, dtype=np.float64), np.asarray(gy, dtype=np.float64))
                       for gx, gy in self.levels)
        if not levels:
            raise ValueError("a gradient pyramid needs at least one level")
        h, w = levels[0][0].shape
        for r, (gx, gy) in enumerate(levels):
            f = 2 ** r
            if h % f or w % f:
                raise DimensionNotDivisible(f"{h}x{w} not divisible by {f}")
            expected = (h // f, w // f)
            if gx.shape != expected or gy.shape != expected:
                raise ShapeMismatch(f"level {r + 1} expected {expected}, got {gx.shape}/{gy.shape}")
        object.__setattr__(self, "levels", levels)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.levels[0][0].shape

    @classmethod
    def zeros(cls, shape, num_levels: int) -> "GradientPyramid":
        h, w = shape
        return cls(tuple((np.zeros((h >> r, w >> r)), np.zeros((h >> r, w >> r)))
                         for r in range(num_levels)))


def _array(x) -> np.ndarray:
    if isinstance(x, DepthGrid):
        if not x.is_dense:
            raise ValueError("operator needs a dense grid")
        return x.values
    return np.asarray(x, dtype=np.float64)


def check_divisible(shape: Sequence[int], factor: int) -> None:
    if factor < 1 or factor & (factor - 1):
        raise ValueError(f"factor must be a power of two, got {factor}")
    if shape[0] % factor or shape[1] % factor:
        raise DimensionNotDivisible(f"shape {tuple(shape)} not divisible by {factor}")


def finite_diff(grid) -> tuple[np.ndarray, np.ndarray]:
    d = _array(grid)
    gx = np.zeros_like(d)
    gy = np.zeros_like(d)
    gx[:, 1:] = d[:, 1:] - d[:, :-1]
    gy[1:, :] = d[1:, :] - d[:-1, :]
    return gx, gy


def diff_adjoint(gx, gy) -> np.ndarray:
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    if gx.shape != gy.shape:
        raise ShapeMismatch(f"gx {gx.shape} and gy {gy.shape} differ")
    out = np.zeros_like(gx)
    out[:, 1:] += gx[:, 1:]
    out[:, :-1] -= gx[:, 1:]
    out[1:, :] += gy[1:, :]
    out[:-1, :] -= gy[1:, :]
    return out


def avg_pool(grid, factor: int) -> np.ndarray:
    d = _array(grid)
    check_divisible(d.shape, factor)
    if factor == 1:
        return d.copy()
    h, w = d.shape
    return d.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def pool_adjoint(grid, factor: int, shape: Sequence[int] | None = None) -> np.ndarray:
    """Adjoint of :func:`avg_pool`: spread each cell over its block divided by factor**2."""
    y = np.asarray(grid, dtype=np.float64)
    check_divisible((y.shape[0] * factor, y.shape[1] * factor), factor)
    if shape is not None and tuple(shape) != (y.shape[0] * factor, y.shape[1] * factor):
        raise ShapeMismatch(f"pooled grid {y.shape} does not match target {tuple(shape)}")
    if factor == 1:
        return y.copy()
    return np.repeat(np.repeat(y, factor, axis=0), factor, axis=1) / (factor * factor)
