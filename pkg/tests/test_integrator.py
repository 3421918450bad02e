import warnings

import numpy as np
import pytest

from depthint.errors import (
    DidNotConverge,
    DimensionNotDivisible,
    GridTooLarge,
    NoObservations,
    PredictorFailure,
    ShapeMismatch,
)
from depthint.grid import DepthGrid, GradientPyramid, SparseObservation
from depthint.integrator import (
    SolverConfig,
    assemble_normal_system,
    complete,
    dense_normal_matrix,
    energy,
    solve,
    solve_dense_oracle,
)
from depthint.predictor import OraclePredictor, ZeroPredictor, pyramid_from_depth

from conftest import smooth_scene


def random_instance(rng, shape, levels, density=0.15):
    mask = rng.random(shape) < density
    if not mask.any():
        mask[rng.integers(shape[0]), rng.integers(shape[1])] = True
    values = np.where(mask, rng.uniform(0.5, 20, shape), 0.0)
    conf = np.where(mask, rng.uniform(0.1, 1.0, shape), 0.0)
    h, w = shape
    pyr = GradientPyramid(tuple((rng.normal(0, 0.3, (h >> r, w >> r)),
                                 rng.normal(0, 0.3, (h >> r, w >> r))) for r in range(levels)))
    return SparseObservation(values, mask, conf), pyr


class TestConfig:
    def test_defaults(self):
        c = SolverConfig()
        assert (c.alpha, c.preconditioner) == (1.0, "jacobi")

    @pytest.mark.parametrize("kwargs", [dict(alpha=0), dict(num_resolutions=0),
                                        dict(cg_rel_tol=1.0), dict(cg_max_iters=0),
                                        dict(preconditioner="ilu")])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)


class TestAssemble:
    def test_symmetric(self, rng):
        obs, pyr = random_instance(rng, (8, 8), 3)
        apply, _ = assemble_normal_system(obs, pyr, SolverConfig(num_resolutions=3))
        for _ in range(5):
            x, y = rng.standard_normal((8, 8)), rng.standard_normal((8, 8))
            assert np.vdot(apply(x), y) == pytest.approx(np.vdot(x, apply(y)), abs=1e-10)

    def test_single_observation_rhs(self):
        obs = SparseObservation.from_points((4, 4), [1], [2], [3.0])
        _, rhs = assemble_normal_system(obs, GradientPyramid.zeros((4, 4), 1),
                                        SolverConfig(alpha=2.5, num_resolutions=1))
        expected = np.zeros((4, 4))
        expected[1, 2] = 2.5 * np.log(3.0)
        np.testing.assert_allclose(rhs, expected, atol=1e-15)

    def test_matches_dense_matrix_columnwise(self, rng):
        obs, pyr = random_instance(rng, (4, 4), 2, density=0.4)
        cfg = SolverConfig(alpha=1.7, num_resolutions=2)
        apply, rhs = assemble_normal_system(obs, pyr, cfg)
        cols = []
        for k in range(16):
            e = np.zeros(16)
            e[k] = 1.0
            cols.append(apply(e.reshape(4, 4)).ravel())
        mat, dense_rhs = dense_normal_matrix(obs, pyr, cfg)
        np.testing.assert_allclose(np.array(cols).T, mat, atol=1e-13)
        np.testing.assert_allclose(rhs.ravel(), dense_rhs, atol=1e-13)

    def test_errors(self):
        empty = SparseObservation(np.zeros((4, 4)), np.zeros((4, 4), bool))
        with pytest.raises(NoObservations):
            assemble_normal_system(empty, GradientPyramid.zeros((4, 4), 1), SolverConfig(num_resolutions=1))
        obs = SparseObservation.from_points((6, 6), [0], [0], [1.0])
        with pytest.raises(DimensionNotDivisible):
            assemble_normal_system(obs, GradientPyramid.zeros((6, 6), 1), SolverConfig(num_resolutions=3))
        with pytest.raises(ShapeMismatch):
            assemble_normal_system(obs, GradientPyramid.zeros((4, 4), 1), SolverConfig(num_resolutions=1))

    def test_zero_confidence_everywhere_is_no_observation(self):
        obs = SparseObservation.from_points((4, 4), [0], [0], [1.0], confidence=[0.0])
        with pytest.raises(NoObservations):
            solve(obs, GradientPyramid.zeros((4, 4), 1), SolverConfig(num_resolutions=1))


class TestSolve:
    def test_two_by_two_constant(self):
        obs = SparseObservation.from_points((2, 2), [0], [0], [2.0])
        d, rep = solve(obs, GradientPyramid.zeros((2, 2), 1), SolverConfig(num_resolutions=1))
        np.testing.assert_allclose(np.exp(d.values), 2.0, rtol=1e-12)
        assert rep.converged and d.space == "log"

    @pytest.mark.parametrize("levels", [1, 2, 3])
    def test_consistent_recovers_gt(self, rng, levels):
        gt = smooth_scene(rng, (16, 16))
        obs = SparseObservation.from_points((16, 16), [5], [9], [gt.values[5, 9]])
        d, rep = solve(obs, pyramid_from_depth(gt, levels), SolverConfig(num_resolutions=levels))
        assert np.abs(d.values - np.log(gt.values)).max() <= 1e-6
        assert rep.energy <= 1e-10

    def test_conflicting_points_match_dense(self):
        obs = SparseObservation.from_points((4, 4), [0, 3], [0, 3], [1.0, 2.0])
        pyr = GradientPyramid.zeros((4, 4), 1)
        cfg = SolverConfig(num_resolutions=1)
        d, _ = solve(obs, pyr, cfg)
        np.testing.assert_allclose(d.values, solve_dense_oracle(obs, pyr, cfg).values, atol=1e-8)

    def test_random_instances_match_dense(self, rng):
        for _ in range(100):
            obs, pyr = random_instance(rng, (8, 8), 3)
            cfg = SolverConfig(alpha=rng.uniform(0.1, 10), num_resolutions=3)
            d, _ = solve(obs, pyr, cfg)
            assert np.abs(d.values - solve_dense_oracle(obs, pyr, cfg).values).max() <= 1e-8

    def test_energy_not_above_simple_guesses(self, rng):
        for _ in range(10):
            obs, pyr = random_instance(rng, (8, 8), 2)
            cfg = SolverConfig(num_resolutions=2)
            d, rep = solve(obs, pyr, cfg)
            scattered = np.where(obs.mask, np.log(np.where(obs.mask, obs.values, 1.0)), 0.0)
            assert rep.energy == pytest.approx(energy(d, obs, pyr, cfg))
            assert rep.energy <= energy(np.zeros((8, 8)), obs, pyr, cfg)
            assert rep.energy <= energy(scattered, obs, pyr, cfg)

    def test_more_levels_keep_exact_solution(self, rng):
        gt = smooth_scene(rng, (16, 16))
        obs = SparseObservation.from_points((16, 16), [0, 11], [3, 14], gt.values[[0, 11], [3, 14]])
        sols = [solve(obs, pyramid_from_depth(gt, r), SolverConfig(num_resolutions=r))[0].values
                for r in (1, 2, 3)]
        for s in sols:
            np.testing.assert_allclose(s, np.log(gt.values), atol=1e-7)

    def test_zero_confidence_equals_omission(self, rng):
        obs, pyr = random_instance(rng, (8, 8), 2, density=0.3)
        rows, cols = np.nonzero(obs.mask)
        conf = obs.confidence.copy()
        values = obs.values.copy()
        values[rows[0], cols[0]] = 1000.0  # a wild point, then silenced
        conf[rows[0], cols[0]] = 0.0
        silenced = SparseObservation(values, obs.mask, conf)
        mask = obs.mask.copy()
        mask[rows[0], cols[0]] = False
        omitted = SparseObservation(np.where(mask, values, 0), mask, np.where(mask, conf, 0))
        cfg = SolverConfig(num_resolutions=2)
        a, _ = solve(silenced, pyr, cfg)
        b, _ = solve(omitted, pyr, cfg)
        np.testing.assert_allclose(a.values, b.values, atol=1e-10)

    def test_non_convergence_is_flagged(self, rng):
        obs, pyr = random_instance(rng, (16, 16), 1, density=0.05)
        with pytest.warns(DidNotConverge):
            _, rep = solve(obs, pyr, SolverConfig(num_resolutions=1, cg_max_iters=2))
        assert not rep.converged and rep.iterations == 2
        assert rep.final_rel_residual > 1e-10

    def test_plain_cg_also_converges(self, rng):
        obs, pyr = random_instance(rng, (8, 8), 2)
        cfg = SolverConfig(num_resolutions=2, preconditioner="none")
        d, rep = solve(obs, pyr, cfg)
        assert rep.converged
        np.testing.assert_allclose(d.values, solve_dense_oracle(obs, pyr, cfg).values, atol=1e-8)


class TestDenseOracle:
    def test_too_large(self):
        obs = SparseObservation.from_points((128, 64), [0], [0], [1.0])
        with pytest.raises(GridTooLarge):
            solve_dense_oracle(obs, GradientPyramid.zeros((128, 64), 1), SolverConfig(num_resolutions=1))

    def test_no_observations(self):
        empty = SparseObservation(np.zeros((4, 4)), np.zeros((4, 4), bool))
        with pytest.raises(NoObservations):
            solve_dense_oracle(empty, GradientPyramid.zeros((4, 4), 1), SolverConfig(num_resolutions=1))

    def test_data_term_dominates(self, rng):
        values = rng.uniform(1, 10, (4, 4))
        obs = SparseObservation(values, np.ones((4, 4), bool))
        pyr = GradientPyramid(((rng.standard_normal((4, 4)), rng.standard_normal((4, 4))),))
        d = solve_dense_oracle(obs, pyr, SolverConfig(alpha=1e8, num_resolutions=1))
        np.testing.assert_allclose(d.values, np.log(values), atol=1e-6)


class _Broken:
    def predict(self, image, normalized_obs, num_levels):
        raise RuntimeError("boom")


class _WrongShape:
    def predict(self, image, normalized_obs, num_levels):
        return GradientPyramid.zeros((4, 4), num_levels)


class TestComplete:
    def test_single_point_constant(self):
        obs = SparseObservation.from_points((8, 8), [3], [4], [7.5])
        out = complete(None, obs, ZeroPredictor(), SolverConfig(num_resolutions=3))
        np.testing.assert_allclose(out.values, 7.5, rtol=1e-12)
        assert out.space == "linear"

    @pytest.mark.parametrize("beta", [1e-3, 1e3])
    def test_scale_equivariance(self, rng, beta):
        gt = smooth_scene(rng, (16, 16))
        mask = rng.random((16, 16)) < 0.1
        obs = SparseObservation(np.where(mask, gt.values * rng.uniform(0.8, 1.2, (16, 16)), 0), mask)
        pred = OraclePredictor(gt)
        base = complete(None, obs, pred).values
        scaled = complete(None, obs.scaled(beta), pred).values
        np.testing.assert_allclose(scaled, beta * base, rtol=1e-6)

    def test_oracle_recovers_gt(self, rng):
        gt = smooth_scene(rng, (16, 16))
        obs = SparseObservation.from_points((16, 16), [8], [8], [gt.values[8, 8]])
        out = complete(None, obs, OraclePredictor(gt))
        np.testing.assert_allclose(np.log(out.values), np.log(gt.values), atol=1e-6)

    def test_report_and_failures(self):
        obs = SparseObservation.from_points((8, 8), [0], [0], [1.0])
        _, rep = complete(None, obs, ZeroPredictor(), return_report=True)
        assert rep.converged
        with pytest.raises(PredictorFailure):
            complete(None, obs, _Broken())
        with pytest.raises(PredictorFailure):
            complete(None, obs, _WrongShape())
        with pytest.raises(NoObservations):
            complete(None, SparseObservation(np.zeros((8, 8)), np.zeros((8, 8), bool)), ZeroPredictor())

    def test_deterministic(self, rng):
        obs, _ = random_instance(rng, (16, 16), 1)
        a = complete(None, obs, ZeroPredictor()).values
        b = complete(None, obs, ZeroPredictor()).values
        assert a.tobytes() == b.tobytes()
