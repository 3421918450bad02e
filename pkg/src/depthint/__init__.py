"""Sparse depth completion by multi-resolution gradient-domain integration."""

from .grid import DepthGrid, GradientPyramid, SparseObservation
from .integrator import SolveReport, SolverConfig, complete, solve, solve_dense_oracle
from .predictor import NoisyOraclePredictor, OraclePredictor, ZeroPredictor
from .scalenorm import exp_map, normalize, to_log

__all__ = [
    "DepthGrid", "GradientPyramid", "SparseObservation", "SolveReport", "SolverConfig",
    "complete", "solve", "solve_dense_oracle", "NoisyOraclePredictor", "OraclePredictor",
    "ZeroPredictor", "exp_map", "normalize", "to_log",
]

__version__ = "0.1.0"
