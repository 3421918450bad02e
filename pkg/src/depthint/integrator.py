"""Multi-resolution gradient-domain depth integration.

The completed log-depth ``d`` minimises

    alpha * sum(M * C * (d - log O)**2) + sum_r || D(pool_r(d)) - G_r ||**2

where ``pool_r`` averages 2**(r-1) blocks and ``D`` takes forward differences.
The normal equations are solved matrix-free with preconditioned conjugate
gradients; :func:`solve_dense_oracle` builds the same problem as an explicit
matrix for verification.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import (
    DidNotConverge,
    GridTooLarge,
    NoObservations,
    PredictorFailure,
    ShapeMismatch,
)
from .grid import (
    LOG,
    DepthGrid,
    GradientPyramid,
    SparseObservation,
    avg_pool,
    check_divisible,
    diff_adjoint,
    finite_diff,
    pool_adjoint,
)
from .scalenorm import exp_map, normalize, to_log

log = logging.getLogger(__name__)

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 1.0
    num_resolutions: int = 3
    cg_rel_tol: float = 1e-10
    cg_max_iters: int | None = None  # None -> 10 * H * W
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.num_resolutions < 1:
            raise ValueError("num_resolutions must be >= 1")
        if not 0 < self.cg_rel_tol < 1:
            raise ValueError("cg_rel_tol must lie in (0, 1)")
        if self.cg_max_iters is not None and self.cg_max_iters < 1:
            raise ValueError("cg_max_iters must be >= 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_rel_residual: float
    energy: float
    converged: bool


def _check_inputs(obs: SparseObservation, pyramid: GradientPyramid, config: SolverConfig):
    if pyramid.shape != obs.shape:
        raise ShapeMismatch(f"pyramid {pyramid.shape} vs observation {obs.shape}")
    check_divisible(obs.shape, 2 ** (config.num_resolutions - 1))
    if pyramid.num_levels != config.num_resolutions:
        raise ShapeMismatch(
            f"pyramid has {pyramid.num_levels} levels, config asks for {config.num_resolutions}")
    if not np.any(obs.mask & (obs.confidence > 0)):
        raise NoObservations("need at least one observation with positive confidence")


def _gradient_normal(d: np.ndarray, num_levels: int) -> np.ndarray:
    """sum_r pool_r^T D^T D pool_r d via the numpy reference operators."""
    out = np.zeros_like(d)
    for r in range(num_levels):
        f = 2 ** r
        out += pool_adjoint(diff_adjoint(*finite_diff(avg_pool(d, f))), f)
    return out


class _NormalOperator:
    """alpha*M*C + sum_r A_r^T A_r applied through the compiled kernels."""

    def __init__(self, weight: np.ndarray, num_levels: int):
        self.weight = np.ascontiguousarray(weight, dtype=np.float64)
        self.num_levels = num_levels

    def into(self, d, out):
        _kernels.normal_apply(d, self.weight, self.num_levels, out)
        return out

    def __call__(self, d):
        d = np.ascontiguousarray(d, dtype=np.float64)
        return self.into(d, np.empty_like(d))


def _gradient_rhs(pyramid: GradientPyramid) -> np.ndarray:
    h, w = pyramid.shape
    out = np.zeros((h, w))
    for r, (gx, gy) in enumerate(pyramid.levels):
        f = 2 ** r
        gx = gx.copy()
        gy = gy.copy()
        gx[:, 0] = 0.0
        gy[0, :] = 0.0
        back = diff_adjoint(gx, gy) / (f * f)
        out.reshape(h // f, f, w // f, f)[...] += back[:, None, :, None]
    return out


def _jacobi_diagonal(weight: np.ndarray, num_levels: int) -> np.ndarray:
    h, w = weight.shape
    diag = weight.copy()
    for r in range(num_levels):
        f = 2 ** r
        hc, wc = h // f, w // f
        deg = np.zeros((hc, wc))
        deg[:, 1:] += 1
        deg[:, :-1] += 1
        deg[1:, :] += 1
        deg[:-1, :] += 1
        diag.reshape(hc, f, wc, f)[...] += (deg / f ** 4)[:, None, :, None]
    return diag


def _log_obs(obs: SparseObservation) -> np.ndarray:
    return np.where(obs.mask, to_log(np.where(obs.mask, obs.values, 1.0)), 0.0)


def assemble_normal_system(obs: SparseObservation, pyramid: GradientPyramid,
                           config: SolverConfig | None = None,
                           ) -> tuple[Callable[[np.ndarray], np.ndarray], np.ndarray]:
    """Return ``(apply, rhs)`` of the normal equations without forming the matrix."""
    config = config or SolverConfig(num_resolutions=pyramid.num_levels)
    _check_inputs(obs, pyramid, config)
    weight = config.alpha * obs.confidence
    rhs = weight * _log_obs(obs) + _gradient_rhs(pyramid)
    return _NormalOperator(weight, config.num_resolutions), rhs


def energy(log_depth, obs: SparseObservation, pyramid: GradientPyramid,
           config: SolverConfig) -> float:
    """Objective value of a log-depth grid."""
    d = np.asarray(getattr(log_depth, "values", log_depth), dtype=np.float64)
    resid = d - _log_obs(obs)
    total = config.alpha * float(np.sum(obs.confidence * resid * resid))
    for r, (gx_hat, gy_hat) in enumerate(pyramid.levels):
        gx, gy = finite_diff(avg_pool(d, 2 ** r))
        total += float(np.sum((gx - gx_hat)[:, 1:] ** 2) + np.sum((gy - gy_hat)[1:, :] ** 2))
    return total


def conjugate_gradient(apply: _NormalOperator, rhs, x0, *, rel_tol, max_iters,
                       inv_diag=None):
    """Preconditioned CG on the normal operator.

    Returns ``(x, iterations, relative_residual)`` with the residual measured
    against ``||rhs||``.
    """
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    b_norm = np.sqrt(_kernels.dot(rhs, rhs))
    if b_norm == 0.0:
        return np.zeros_like(rhs), 0, 0.0
    if inv_diag is None:
        inv_diag = np.ones_like(rhs)
    x = np.array(x0, dtype=np.float64, order="C")
    ap = np.empty_like(x)
    r = rhs - apply.into(x, ap)
    z = np.empty_like(x)
    rz = _kernels.precondition(r, inv_diag, z)
    p = z.copy()
    rel = np.sqrt(_kernels.dot(r, r)) / b_norm
    it = 0
    while rel > rel_tol and it < max_iters:
        apply.into(p, ap)
        step = rz / _kernels.dot(p, ap)
        rr = _kernels.cg_update(x, r, p, ap, step)
        it += 1
        # refresh the recursive residual so long runs do not drift
        if it % 200 == 0:
            r = rhs - apply.into(x, ap)
            rr = _kernels.dot(r, r)
        rel = np.sqrt(rr) / b_norm
        rz_new = _kernels.precondition(r, inv_diag, z)
        _kernels.direction_update(p, z, rz_new / rz)
        rz = rz_new
    return x, it, float(rel)


def solve(obs: SparseObservation, pyramid: GradientPyramid,
          config: SolverConfig | None = None) -> tuple[DepthGrid, SolveReport]:
    """Minimise the integration energy; returns the log-depth grid and a report.

    The data term is centred on the median observed log-depth before the
    solve and the offset is added back afterwards. Constants lie in the null
    space of every gradient term, so the minimiser is unchanged while a
    global rescaling of ``obs`` leaves the CG iterates untouched.
    """
    config = config or SolverConfig(num_resolutions=pyramid.num_levels)
    _check_inputs(obs, pyramid, config)
    log_obs = _log_obs(obs)
    offset = float(np.median(log_obs[obs.mask]))
    centred = np.where(obs.mask, log_obs - offset, 0.0)

    weight = config.alpha * obs.confidence
    num_levels = config.num_resolutions
    apply = _NormalOperator(weight, num_levels)
    rhs = weight * centred + _gradient_rhs(pyramid)
    inv_diag = None
    if config.preconditioner == "jacobi":
        inv_diag = 1.0 / _jacobi_diagonal(weight, num_levels)
    h, w = obs.shape
    max_iters = config.cg_max_iters or 10 * h * w
    x, iters, rel = conjugate_gradient(apply, rhs, centred, rel_tol=config.cg_rel_tol,
                                       max_iters=max_iters, inv_diag=inv_diag)
    out = DepthGrid(x + offset, np.ones(obs.shape, dtype=bool), space=LOG)
    converged = rel <= config.cg_rel_tol
    report = SolveReport(iters, rel, energy(out.values, obs, pyramid, config), converged)
    if not converged:
        warnings.warn(f"CG stopped at relative residual {rel:.3e} after {iters} iterations",
                      DidNotConverge, stacklevel=2)
    log.debug("cg: %d iterations, rel residual %.3e", iters, rel)
    return out, report


def _diff_matrix(h: int, w: int) -> np.ndarray:
    """Explicit forward-difference rows, boundary rows dropped."""
    idx = np.arange(h * w).reshape(h, w)
    rows = []
    for a, b in ((idx[:, 1:], idx[:, :-1]), (idx[1:, :], idx[:-1, :])):
        a = a.ravel()
        b = b.ravel()
        m = np.zeros((a.size, h * w))
        m[np.arange(a.size), a] = 1.0
        m[np.arange(a.size), b] = -1.0
        rows.append(m)
    return np.vstack(rows)


def _pool_matrix(h: int, w: int, f: int) -> np.ndarray:
    hc, wc = h // f, w // f
    m = np.zeros((hc * wc, h * w))
    for i in range(h):
        for j in range(w):
            m[(i // f) * wc + j // f, i * w + j] = 1.0 / (f * f)
    return m


def _design_matrix(obs: SparseObservation, pyramid: GradientPyramid, config: SolverConfig):
    h, w = obs.shape
    sqrt_w = np.sqrt(config.alpha * obs.confidence.ravel())
    blocks = [np.diag(sqrt_w)]
    targets = [sqrt_w * _log_obs(obs).ravel()]
    for r, (gx, gy) in enumerate(pyramid.levels):
        f = 2 ** r
        hc, wc = h // f, w // f
        blocks.append(_diff_matrix(hc, wc) @ _pool_matrix(h, w, f))
        targets.append(np.concatenate([gx[:, 1:].ravel(), gy[1:, :].ravel()]))
    return np.vstack(blocks), np.concatenate(targets)


def dense_normal_matrix(obs: SparseObservation, pyramid: GradientPyramid,
                        config: SolverConfig) -> tuple[np.ndarray, np.ndarray]:
    """Explicit ``(J^T J, J^T t)`` built from dense difference and pooling matrices."""
    h, w = obs.shape
    if h * w > DENSE_LIMIT:
        raise GridTooLarge(f"{h}x{w} exceeds the dense limit of {DENSE_LIMIT} pixels")
    _check_inputs(obs, pyramid, config)
    jac, target = _design_matrix(obs, pyramid, config)
    return jac.T @ jac, jac.T @ target


def solve_dense_oracle(obs: SparseObservation, pyramid: GradientPyramid,
                       config: SolverConfig | None = None) -> DepthGrid:
    config = config or SolverConfig(num_resolutions=pyramid.num_levels)
    mat, rhs = dense_normal_matrix(obs, pyramid, config)
    x = scipy.linalg.cho_solve(scipy.linalg.cho_factor(mat), rhs)
    return DepthGrid(x.reshape(obs.shape), np.ones(obs.shape, dtype=bool), space=LOG)


def complete(image, obs: SparseObservation, predictor, config: SolverConfig | None = None,
             return_report: bool = False):
    """Sparse depth -> dense linear depth.

    The predictor only sees the median-normalised observation; the data term
    uses the raw depths so the output keeps the input's scale.
    """
    config = config or SolverConfig()
    normalized = normalize(obs)
    try:
        pyramid = predictor.predict(image, normalized, config.num_resolutions)
    except Exception as exc:
        raise PredictorFailure(f"{type(predictor).__name__} failed: {exc}") from exc
    if pyramid.shape != obs.shape or pyramid.num_levels != config.num_resolutions:
        raise PredictorFailure("predictor returned a pyramid of the wrong shape")
    if not all(np.all(np.isfinite(gx)) and np.all(np.isfinite(gy)) for gx, gy in pyramid.levels):
        raise PredictorFailure("predictor returned non-finite gradients")
    log_depth, report = solve(obs, pyramid, config)
    depth = exp_map(log_depth)
    if return_report:
        return depth, report
    return depth
