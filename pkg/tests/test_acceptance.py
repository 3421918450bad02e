"""Acceptance criteria; each test records one PASS/FAIL line shown after the run."""

import math
import time

import numpy as np
import pytest

from depthint.camera import CameraIntrinsics
from depthint.evaluation import compute_metrics
from depthint.grid import DepthGrid, GradientPyramid, SparseObservation
from depthint.integrator import SolverConfig, complete, solve, solve_dense_oracle
from depthint.losses import (
    LaplacianParams,
    combined_loss,
    gradient_matching_loss,
    l1_loss,
    laplacian_nll,
)
from depthint.patterns import (
    PatternSpec,
    elevation_angles,
    estimate_line_count,
    generate,
    inject_outliers,
    sample_lidar,
    sample_random,
    subsample_lines,
)
from depthint.predictor import OraclePredictor, ZeroPredictor
from depthint.sim import simulate_1d, simulate_solver_2d, two_point_pattern

from conftest import ACCEPTANCE_LINES, smooth_scene
from test_integrator import random_instance
from test_losses import fd_check


def record(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  [{number:2d}] {title}: {detail}")
    assert ok, detail


class _FixedPyramid:
    def __init__(self, pyramid):
        self.pyramid = pyramid

    def predict(self, image, normalized_obs, num_levels):
        return self.pyramid


def test_01_oracle_equivalence():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for n in (4, 8, 16):
        for levels in (1, 2, 3):
            cfg = SolverConfig(num_resolutions=levels)
            for _ in range(100):
                obs, pyr = random_instance(rng, (n, n), levels)
                got, _ = solve(obs, pyr, cfg)
                ref = solve_dense_oracle(obs, pyr, cfg)
                worst = max(worst, float(np.abs(got.values - ref.values).max()))
    elapsed = time.perf_counter() - start
    record(1, "iterative solve vs dense oracle", worst <= 1e-8 and elapsed < 30,
           f"max abs {worst:.2e} (<= 1e-8) over 900 instances in {elapsed:.1f} s (< 30 s)")


def test_02_scale_equivariance():
    rng = np.random.default_rng(102)
    gt = smooth_scene(rng, (32, 32), 2.0, 10.0)
    obs = sample_random(gt, 0.05, rng)
    pyr = GradientPyramid(tuple((rng.normal(0, 0.05, (32 >> r, 32 >> r)),
                                 rng.normal(0, 0.05, (32 >> r, 32 >> r))) for r in range(3)))
    cfg = SolverConfig(num_resolutions=3)
    base = complete(None, obs, _FixedPyramid(pyr), cfg).values
    base_rel = compute_metrics(base, gt.values).rel
    worst_rel_err = worst_rel_shift = 0.0
    for beta in (1e-3, 0.1, 10.0, 1e3):
        out = complete(None, obs.scaled(beta), _FixedPyramid(pyr), cfg).values
        worst_rel_err = max(worst_rel_err, float(np.max(np.abs(out - beta * base) / (beta * base))))
        rel = compute_metrics(out, beta * gt.values).rel
        worst_rel_shift = max(worst_rel_shift, abs(rel - base_rel))
    record(2, "scale equivariance", worst_rel_err <= 1e-6 and worst_rel_shift <= 1e-9,
           f"max relative deviation {worst_rel_err:.2e} (<= 1e-6), REL spread "
           f"{worst_rel_shift:.2e} (<= 1e-9)")


def test_03_variance_law():
    start = time.perf_counter()
    prof = simulate_1d(0.01, 64, 10_000, np.random.default_rng(103))
    elapsed = time.perf_counter() - start
    ratios = {n: float(prof.empirical_var[n - 1] / (n * 0.01 ** 2)) for n in (8, 16, 32, 64)}
    ok = all(0.9 <= r <= 1.1 for r in ratios.values()) and elapsed < 10
    record(3, "1-D variance grows as n*sigma^2", ok,
           ", ".join(f"n={n}: {r:.3f}" for n, r in ratios.items()) + f" in {elapsed:.2f} s")


def test_04_multires_reduction():
    shape = (4, 64)
    pattern = two_point_pattern(shape)
    std = {r: float(simulate_solver_2d(shape, pattern, 0.05, r, 2000, seed=104).max())
           for r in (1, 3)}
    ratio = std[3] / std[1]
    record(4, "multi-resolution error reduction", ratio < 0.7,
           f"max std R=1 {std[1]:.4f}, R=3 {std[3]:.4f}, ratio {ratio:.3f} (< 0.7)")


def test_05_consistency_recovery():
    rng = np.random.default_rng(105)
    worst = 0.0
    for _ in range(50):
        gt = smooth_scene(rng, (32, 32))
        r, c = rng.integers(32, size=2)
        obs = SparseObservation.from_points(gt.shape, [r], [c], [gt.values[r, c]])
        for levels in (1, 2, 3):
            out = complete(None, obs, OraclePredictor(gt), SolverConfig(num_resolutions=levels))
            worst = max(worst, float(np.abs(np.log(out.values) - np.log(gt.values)).max()))
    record(5, "oracle gradients recover ground truth", worst <= 1e-6,
           f"max abs log error {worst:.2e} (<= 1e-6) over 50 scenes x 3 R")


def test_06_loss_gradients():
    rng = np.random.default_rng(106)
    pred, gt = rng.uniform(1, 5, (16, 16)), rng.uniform(1, 5, (16, 16))
    gamma = rng.uniform(-1.5, 1.0, (16, 16))
    mask = rng.random((16, 16)) < 0.8
    errs = {}
    errs["l1"] = fd_check(lambda p: l1_loss(p, gt, mask)[0], pred, l1_loss(pred, gt, mask)[1])
    _, g_mean, g_gamma = laplacian_nll(LaplacianParams(pred, gamma), gt, mask)
    errs["lap_mean"] = fd_check(lambda p: laplacian_nll(LaplacianParams(p, gamma), gt, mask)[0],
                                pred, g_mean)
    errs["lap_gamma"] = fd_check(lambda g: laplacian_nll(LaplacianParams(pred, g), gt, mask)[0],
                                 gamma, g_gamma)
    errs["gm"] = fd_check(lambda p: gradient_matching_loss(p, gt)[0], pred,
                          gradient_matching_loss(pred, gt)[1])
    residual = 0.8137
    bs = np.arange(0.1, 3.0, 1e-6)
    b_star = float(bs[np.argmin(np.log(2 * bs) + residual / bs)])
    ok = max(errs.values()) <= 1e-4 and abs(b_star - residual) <= 1e-6
    record(6, "loss gradients and Laplacian optimum", ok,
           ", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + f" (<= 1e-4); b* {b_star:.6f} "
           f"vs |r| {residual}")


def test_07_combined_weights():
    rng = np.random.default_rng(107)
    worst = 0.0
    for _ in range(20):
        pred, gt = rng.uniform(0.5, 20, (16, 16)), rng.uniform(0.5, 20, (16, 16))
        lap = LaplacianParams(rng.uniform(0.5, 20, (16, 16)), rng.uniform(-3, 2, (16, 16)))
        mask = rng.random((16, 16)) < 0.5
        expected = (l1_loss(pred, gt, mask)[0] + 0.5 * laplacian_nll(lap, gt, mask)[0]
                    + 2.0 * gradient_matching_loss(pred, gt)[0])
        worst = max(worst, abs(combined_loss(pred, lap, gt, mask) - expected))
    record(7, "combined loss = L1 + 0.5 Lap + 2.0 gm", worst <= 1e-12,
           f"max recomposition error {worst:.1e} (<= 1e-12)")


def test_08_pattern_fidelity():
    shape = (256, 256)
    intr = CameraIntrinsics.default_for(shape)
    plane = DepthGrid(np.full(shape, 5.0))
    counts = []
    for seed in range(5):
        scan = sample_lidar(plane, intr, 64, np.random.default_rng(seed), origin_jitter=0.0)
        sub = subsample_lines(scan, intr, 8)
        el = elevation_angles(intr.rays(shape)[sub.mask] * sub.values[sub.mask][:, None])
        counts.append(estimate_line_count(el))

    gt = smooth_scene(np.random.default_rng(108), (64, 64))
    obs = sample_random(gt, 0.2, np.random.default_rng(0))
    lo, hi = np.percentile(gt.values, [5, 95])
    in_range = True
    for seed in range(200):
        noisy, outl = inject_outliers(obs, 0.1, gt, np.random.default_rng(seed))
        in_range &= bool(np.all((noisy.values[outl] >= lo) & (noisy.values[outl] <= hi)))
    same, none = inject_outliers(obs, 0.0, gt, np.random.default_rng(1))
    identity = (np.array_equal(same.values, obs.values) and np.array_equal(same.mask, obs.mask)
                and not none.any())

    deterministic = True
    specs = [PatternSpec("random", density=0.02, outlier_fraction=0.05, seed=3),
             PatternSpec("keypoint", num_points=50, boundary_noise=True, seed=4),
             PatternSpec("lidar", num_lines=16, outlier_fraction=0.1, boundary_noise=True, seed=5)]
    for spec in specs:
        (a, ma), (b, mb) = generate(gt, spec), generate(gt, spec)
        deterministic &= (a.values.tobytes() == b.values.tobytes()
                          and a.mask.tobytes() == b.mask.tobytes() and ma.tobytes() == mb.tobytes())
    ok = all(c == 8 for c in counts) and in_range and identity and deterministic
    record(8, "pattern fidelity", ok,
           f"8-line clusters {counts}, outliers in [p5, p95] {in_range}, fraction-0 identity "
           f"{identity}, byte-deterministic {deterministic}")


def test_09_metric_fixtures():
    m = compute_metrics(np.array([[1.0, 2.0], [1.0, 2.0]]), np.full((2, 2), 2.0))
    golden = (m.mae == 0.5 and m.rmse == math.sqrt(0.5) and m.rel == 0.25 and m.delta1 == 0.5)
    rng = np.random.default_rng(109)
    gt = rng.uniform(1, 10, (8, 8))
    threshold = compute_metrics(1.3 * gt, gt).delta1 == 0.0
    pred = gt * rng.uniform(0.7, 1.4, gt.shape)
    base = compute_metrics(pred, gt)
    invariant = all(
        compute_metrics(b * pred, b * gt).rel == base.rel
        and compute_metrics(b * pred, b * gt).delta1 == base.delta1
        for b in (2.0 ** -10, 0.5, 4.0, 2.0 ** 20))
    record(9, "metric golden values", golden and threshold and invariant,
           f"golden {golden} (mae {m.mae}, rmse {m.rmse:.4f}, rel {m.rel}, delta1 {m.delta1}), "
           f"1.3x delta1=0 {threshold}, rescaling invariance {invariant}")


def test_10_performance():
    warm = SparseObservation.from_points((8, 8), [0], [0], [1.0])
    complete(None, warm, ZeroPredictor(), SolverConfig(num_resolutions=3))
    rng = np.random.default_rng(110)
    gt = smooth_scene(rng, (480, 640), 2.0, 10.0)
    obs = sample_random(gt, 100 / (480 * 640), rng)
    cfg = SolverConfig(num_resolutions=3, cg_rel_tol=1e-8)
    start = time.perf_counter()
    out, report = complete(None, obs, ZeroPredictor(), cfg, return_report=True)
    elapsed = time.perf_counter() - start
    ok = elapsed <= 10.0 and report.converged and out.shape == (480, 640)
    record(10, "480x640 completion time", ok,
           f"{elapsed:.2f} s (<= 10 s), {report.iterations} CG iterations, converged "
           f"{report.converged}")
