"""Log-space median normalisation of sparse depth and the map back to depth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoObservations, NonPositiveDepth
from .grid import LINEAR, DepthGrid, SparseObservation

MIN_DEPTH = 1e-12


@dataclass(frozen=True)
class NormalizedObservation:
    values: np.ndarray
    mask: np.ndarray
    log_median: float

    @property
    def shape(self):
        return self.values.shape


def median(values) -> float:
    """Median with the mean of the two middle values for even counts."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = v.size
    if n == 0:
        raise NoObservations("median of an empty set")
    mid = n // 2
    if n % 2:
        return float(v[mid])
    return float(0.5 * (v[mid - 1] + v[mid]))


def to_log(values) -> np.ndarray:
    v = np.asarray(getattr(values, "values", values), dtype=np.float64)
    if np.any(~(v > MIN_DEPTH)):
        raise NonPositiveDepth(f"depths must exceed {MIN_DEPTH}")
    return np.log(v)


def exp_map(log_grid) -> DepthGrid:
    if isinstance(log_grid, DepthGrid):
        values, valid = log_grid.values, log_grid.valid
    else:
        values = np.asarray(log_grid, dtype=np.float64)
        valid = np.isfinite(values)
    if not np.all(np.isfinite(values[valid])):
        raise ValueError("exp_map needs finite inputs")
    return DepthGrid(np.where(valid, np.exp(np.where(valid, values, 0.0)), 0.0), valid, LINEAR)


def normalize(obs: SparseObservation) -> NormalizedObservation:
    """``log(O) - log(median(O))`` at observed pixels, 0 elsewhere."""
    if obs.count == 0:
        raise NoObservations("cannot normalise an empty observation")
    observed = obs.values[obs.mask]
    if np.any(observed <= MIN_DEPTH):
        raise NonPositiveDepth(f"observed depths must exceed {MIN_DEPTH}")
    log_med = float(np.log(median(observed)))
    values = np.zeros(obs.shape)
    values[obs.mask] = np.log(observed) - log_med
    return NormalizedObservation(values, obs.mask.copy(), log_med)
