"""Quasilinear Dirichlet problem  -div(a(u) grad u) + c u = 0,  u = g on the boundary.

Two independent routes are provided:

* :func:`solve_quasilinear_picard` freezes the coefficient at the previous
  iterate and solves a linear problem (damped Picard / fixed-point iteration);
* :func:`solve_quasilinear_kirchhoff` works with ``U = A(u)``, which satisfies
  the semilinear problem ``-Delta U + c H(U) = 0``, ``U = A(g)``, and maps back
  with ``u = H(U)``.

The frozen coefficient of an edge is the secant slope of ``A`` between its end
values, ``kappa_e = (A(u_i) - A(u_j)) / (u_i - u_j)``. With that choice the
discrete fixed point satisfies ``K A(u) + M c u = 0`` at interior vertices,
which is exactly the discrete semilinear problem, so both routes converge to
the same nodal field.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .coeffs import CoefficientA, CoefficientC
from .errors import ConvergenceError
from .fem import (
    DirichletSolver,
    SparseOperator,
    assemble,
    assemble_edges,
    h1_norm,
    h_half_norm,
    l2_norm,
    lumped_mass,
    stiffness,
)
from .mesh import TriangleMesh

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200
_MIN_DAMPING = 2.0 ** -10


class SolvePath(str, Enum):
    PICARD = "PicardDirect"
    KIRCHHOFF = "KirchhoffSemilinear"


@dataclass
class SolveReport:
    iterations: int
    final_update_norm: float
    residual_norm: float
    path: SolvePath
    damping: float = 1.0
    linear_solves: int = 0
    converged: bool = False
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["path"] = self.path.value
        return d


def _c_values(mesh, coeffC):
    if coeffC is None:
        return np.zeros(mesh.n_vertices)
    v = coeffC.values if isinstance(coeffC, CoefficientC) else np.asarray(coeffC, dtype=float)
    if v.shape != (mesh.n_vertices,):
        raise ValueError(f"c has {v.shape} values, mesh has {mesh.n_vertices} vertices")
    return v


def _boundary_data(mesh, g):
    return np.array(np.broadcast_to(np.asarray(g, dtype=float), (len(mesh.boundary_nodes),)))


def frozen_operator(mesh: TriangleMesh, coeffA: CoefficientA, coeffC, u) -> SparseOperator:
    """Linear operator of one Picard step, coefficient frozen at ``u``."""
    e = mesh.edges
    kappa = coeffA.secant(u[e[:, 0]], u[e[:, 1]])
    return assemble_edges(mesh, kappa, _c_values(mesh, coeffC))


def nonlinear_residual(mesh: TriangleMesh, coeffA: CoefficientA, coeffC, u):
    """Full nodal residual ``K A(u) + M c u``; its boundary part is the DtN pairing vector."""
    c = _c_values(mesh, coeffC)
    return stiffness(mesh) @ coeffA.A(u) + lumped_mass(mesh) * c * u


def solve_quasilinear_picard(mesh: TriangleMesh, coeffA: CoefficientA, coeffC, g,
                             tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                             damping: float = 1.0, u0=None, adaptive: bool = True,
                             method: str = "direct"):
    """Damped Picard iteration ``u <- (1 - theta) u + theta T(u)``.

    ``T(u)`` solves the linear problem with the coefficient frozen at ``u``.
    The iteration stops once ``||T(u) - u||_{L2} <= tol`` and returns ``T(u)``,
    so the boundary data are met exactly. With ``adaptive`` the damping is
    halved whenever the update norm grows.

    Returns
    -------
    u : ndarray
        Nodal solution.
    report : SolveReport
        ``iterations`` counts the updates applied before the stopping test
        succeeded; the confirming solve is counted only in ``linear_solves``.

    Raises
    ------
    ConvergenceError
        After ``max_iter`` updates without meeting ``tol``; the exception carries
        the report.
    """
    if not (0.0 < damping <= 1.0):
        raise ValueError("damping must lie in (0, 1]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = _boundary_data(mesh, g)
    B = mesh.boundary_nodes
    u = np.zeros(mesh.n_vertices) if u0 is None else np.array(u0, dtype=float)
    u[B] = g
    theta = damping
    report = SolveReport(0, np.inf, np.inf, SolvePath.PICARD, damping=theta)
    prev = np.inf
    for _ in range(max_iter + 1):
        Tu = DirichletSolver(frozen_operator(mesh, coeffA, coeffC, u), method=method).solve(g, u0=u)
        report.linear_solves += 1
        update = l2_norm(mesh, Tu - u)
        report.history.append(update)
        report.final_update_norm = update
        if update <= tol:
            report.converged = True
            report.damping = theta
            report.residual_norm = float(np.linalg.norm(
                nonlinear_residual(mesh, coeffA, coeffC, Tu)[mesh.interior_nodes]))
            return Tu, report
        if report.iterations == max_iter:
            break
        if adaptive and update > prev:
            theta = max(0.5 * theta, _MIN_DAMPING)
        prev = update
        u = u + theta * (Tu - u)
        report.iterations += 1
    report.damping = theta
    report.residual_norm = float(np.linalg.norm(nonlinear_residual(mesh, coeffA, coeffC, u)[mesh.interior_nodes]))
    raise ConvergenceError(
        f"Picard iteration did not reach tol={tol:g} in {max_iter} iterations "
        f"(last update {report.final_update_norm:.3e}, damping {theta:g}); retry with smaller damping",
        report,
    )


def solve_quasilinear_kirchhoff(mesh: TriangleMesh, coeffA: CoefficientA, coeffC, g,
                                tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                                damping: float = 1.0, adaptive: bool = True, method: str = "direct"):
    """Solve ``-Delta U + c H(U) = 0``, ``U = A(g)`` and return ``u = H(U)``.

    The zeroth-order term is lagged: ``-Delta U_new = -c H(U_old)``. The
    Laplacian is factorized once. Stops when the L2 update of ``U`` is below
    ``tol``.
    """
    g = _boundary_data(mesh, g)
    c = _c_values(mesh, coeffC)
    G = coeffA.A(g)
    lap = DirichletSolver(assemble(mesh, 1.0), method=method)
    U = lap.solve(G)
    report = SolveReport(0, 0.0, 0.0, SolvePath.KIRCHHOFF, damping=damping, linear_solves=1)
    if not np.any(c):
        report.converged = True
        return coeffA.H(U), report
    theta = damping
    prev = np.inf
    for _ in range(max_iter + 1):
        TU = lap.solve(G, f=-c * coeffA.H(U))
        report.linear_solves += 1
        update = l2_norm(mesh, TU - U)
        report.history.append(update)
        report.final_update_norm = update
        if update <= tol:
            report.converged = True
            report.damping = theta
            u = coeffA.H(TU)
            report.residual_norm = float(np.linalg.norm(
                nonlinear_residual(mesh, coeffA, coeffC, u)[mesh.interior_nodes]))
            return u, report
        if report.iterations == max_iter:
            break
        if adaptive and update > prev:
            theta = max(0.5 * theta, _MIN_DAMPING)
        prev = update
        U = U + theta * (TU - U)
        report.iterations += 1
    report.damping = theta
    raise ConvergenceError(
        f"semilinear fixed point did not reach tol={tol:g} in {max_iter} iterations "
        f"(last update {report.final_update_norm:.3e})",
        report,
    )


def uniqueness_check(mesh: TriangleMesh, coeffA: CoefficientA, coeffC, g, starts, **kwargs) -> float:
    """Largest pairwise L2 distance between Picard solutions started from ``starts``."""
    sols = [solve_quasilinear_picard(mesh, coeffA, coeffC, g, u0=s, **kwargs)[0] for s in starts]
    dists = [l2_norm(mesh, a - b) for a, b in itertools.combinations(sols, 2)]
    return max(dists, default=0.0)


def apriori_ratios(mesh: TriangleMesh, coeffA: CoefficientA, coeffC, g, taus, **kwargs):
    """``||u_tau||_{H1} / ||tau g||_{H1/2}`` for each scaling ``tau``."""
    g = _boundary_data(mesh, g)
    out = []
    for tau in taus:
        u, _ = solve_quasilinear_picard(mesh, coeffA, coeffC, tau * g, **kwargs)
        out.append(h1_norm(mesh, u) / h_half_norm(mesh, tau * g))
    return np.array(out)
