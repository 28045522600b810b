"""Finite-element laboratory for Dirichlet-to-Neumann maps of quasilinear elliptic problems."""
from .coeffs import CoefficientA, CoefficientC
from .errors import ConvergenceError, DtnLabError, LinearSolveError
from .mesh import Region, TriangleMesh, generate, refine

__version__ = "0.1.0"

__all__ = [
    "CoefficientA",
    "CoefficientC",
    "ConvergenceError",
    "DtnLabError",
    "LinearSolveError",
    "Region",
    "TriangleMesh",
    "generate",
    "refine",
]
