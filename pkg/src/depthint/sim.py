"""Monte-Carlo study of how gradient noise accumulates during integration."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .grid import DepthGrid, SparseObservation
from .integrator import SolverConfig, complete
from .predictor import NoisyOraclePredictor

Z95 = 1.96


@dataclass(frozen=True)
class VarianceProfile:
    distances: np.ndarray
    analytic_var: np.ndarray
    empirical_var: np.ndarray

    def __post_init__(self):
        n = len(self.distances)
        if len(self.analytic_var) != n or len(self.empirical_var) != n:
            raise ValueError("profile columns differ in length")

    @property
    def ci95_halfwidth(self) -> np.ndarray:
        return Z95 * np.sqrt(self.empirical_var)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["distance", "analytic_var", "empirical_var", "ci95"])
            for row in zip(self.distances, self.analytic_var, self.empirical_var,
                           self.ci95_halfwidth):
                w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])


def analytic_variance(sigma: float, n) -> float:
    """Variance of a depth integrated over ``n`` noisy unit steps."""
    if sigma < 0 or np.any(np.asarray(n) < 0):
        raise ValueError("sigma and n must be non-negative")
    return n * sigma ** 2


def simulate_1d(sigma: float, length: int, trials: int,
                rng: np.random.Generator) -> VarianceProfile:
    """Integrate zero-mean noisy gradients outward from a known pixel at 0."""
    if trials < 100:
        raise ValueError("use at least 100 trials")
    noise = sigma * rng.standard_normal((trials, length))
    depth = np.cumsum(noise, axis=1)
    dist = np.arange(1, length + 1)
    return VarianceProfile(dist, analytic_variance(sigma, dist).astype(np.float64),
                           depth.var(axis=0, ddof=1))


def two_point_pattern(shape) -> np.ndarray:
    """Known pixels at the middle row of the first and last column."""
    mask = np.zeros(shape, dtype=bool)
    mask[shape[0] // 2, 0] = True
    mask[shape[0] // 2, -1] = True
    return mask


def simulate_solver_2d(grid_shape, observation_pattern, sigma: float, num_resolutions: int,
                       trials: int, config: SolverConfig | None = None,
                       seed=0) -> np.ndarray:
    """Per-pixel std of the log-depth error when completing a flat scene.

    Each trial gets its own noise stream spawned from ``seed``, so the result
    does not depend on evaluation order.
    """
    mask = np.asarray(observation_pattern, dtype=bool)
    if mask.shape != tuple(grid_shape):
        raise ValueError("pattern shape differs from grid shape")
    base = config or SolverConfig()
    config = SolverConfig(base.alpha, num_resolutions, base.cg_rel_tol, base.cg_max_iters,
                          base.preconditioner)
    gt = DepthGrid(np.ones(grid_shape))
    obs = SparseObservation(mask.astype(np.float64), mask)
    children = np.random.SeedSequence(seed).spawn(trials)
    errors = np.empty((trials,) + tuple(grid_shape))
    for t, child in enumerate(children):
        predictor = NoisyOraclePredictor(gt, sigma, seed=child)
        errors[t] = np.log(complete(None, obs, predictor, config).values)
    return errors.std(axis=0, ddof=1) if trials > 1 else np.zeros(grid_shape)


def write_2d_csv(path, profiles: dict) -> None:
    """Rows of ``resolutions, column, max_std, mean_std`` per column of each map."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["resolutions", "column", "max_std", "mean_std"])
        for r, std in profiles.items():
            for col in range(std.shape[1]):
                w.writerow([r, col, repr(float(std[:, col].max())), repr(float(std[:, col].mean()))])
