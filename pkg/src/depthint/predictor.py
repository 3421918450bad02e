"""Gradient predictors: the pluggable source of per-level log-depth gradients.

Anything with a ``predict(image, normalized_obs, num_levels)`` method returning a
:class:`~depthint.grid.GradientPyramid` can drive :func:`depthint.integrator.complete`.
The shipped predictors ignore the image.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .grid import DepthGrid, GradientPyramid, avg_pool, finite_diff
from .scalenorm import NormalizedObservation, to_log


class GradientPredictor(Protocol):
    def predict(self, image, normalized_obs: NormalizedObservation,
                num_levels: int) -> GradientPyramid: ...


class ZeroPredictor:
    """All-zero gradients: completion becomes smooth log-domain interpolation."""

    def predict(self, image, normalized_obs, num_levels):
        return GradientPyramid.zeros(normalized_obs.shape, num_levels)


def pyramid_from_depth(gt: DepthGrid | np.ndarray, num_levels: int) -> GradientPyramid:
    """Differences of the pooled log-depth at every level."""
    values = gt.values if isinstance(gt, DepthGrid) else np.asarray(gt, dtype=np.float64)
    if isinstance(gt, DepthGrid) and not gt.is_dense:
        raise ValueError("ground truth must be dense")
    log_depth = to_log(values)
    return GradientPyramid(tuple(finite_diff(avg_pool(log_depth, 2 ** r))
                                 for r in range(num_levels)))


class OraclePredictor:
    """Returns the exact gradients of a known dense depth map."""

    def __init__(self, gt: DepthGrid):
        self.gt = gt
        # fails early on non-positive depth
        self._log = to_log(gt.values)

    def predict(self, image, normalized_obs, num_levels):
        return pyramid_from_depth(self.gt, num_levels)


class NoisyOraclePredictor:
    """Oracle gradients plus i.i.d. Gaussian noise of std ``sigma`` per entry.

    The noise stream is fixed at construction from ``seed``, so repeated
    ``predict`` calls return the same pyramid.
    """

    def __init__(self, gt: DepthGrid, sigma: float, seed=0):
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        self.oracle = OraclePredictor(gt)
        self.sigma = float(sigma)
        self.seed = seed

    def predict(self, image, normalized_obs, num_levels):
        clean = self.oracle.predict(image, normalized_obs, num_levels)
        if self.sigma == 0:
            return clean
        rng = np.random.default_rng(self.seed)
        return GradientPyramid(tuple(
            (gx + self.sigma * rng.standard_normal(gx.shape),
             gy + self.sigma * rng.standard_normal(gy.shape))
            for gx, gy in clean.levels))


def zero_predictor() -> ZeroPredictor:
    return ZeroPredictor()


def oracle_predictor(gt: DepthGrid) -> OraclePredictor:
    return OraclePredictor(gt)


def noisy_oracle_predictor(gt: DepthGrid, sigma: float, seed=0) -> NoisyOraclePredictor:
    return NoisyOraclePredictor(gt, sigma, seed)
