"""Discrete p -> infinity eigenvalue chains for ||f(Du)||_p on {||g(u)||_p = 1}."""
from .continuation import ContinuationTrace, geometric_schedule, run_continuation
from .densities import DensityF, DensityG, QuadraticTensor, half_euclidean_f, half_euclidean_g
from .discrete_calculus import DiscreteDomain, GridField, gradient, lp_mean_norm
from .lp_solver import LpSolution, SolverConfig, solve_lp
from .normalize import normalize

__version__ = "0.1.0"
