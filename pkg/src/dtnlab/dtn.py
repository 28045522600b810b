"""Discrete Dirichlet-to-Neumann maps.

The response to boundary data ``g`` is the vector of conormal pairings
``r_k = <a(u) d_n u, phi_k> = int a(u) grad u . grad phi_k + c u phi_k``
over the boundary hat functions ``phi_k``, evaluated with the same bilinear
form (and quadrature) the solver used. No boundary differentiation of the
discrete solution is involved.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse.linalg as spla

from .coeffs import CoefficientA, CoefficientC
from .fem import assemble, dual_norm, lumped_mass, solve_dirichlet, stiffness
from .mesh import TriangleMesh
from .solver import _c_values, nonlinear_residual, solve_quasilinear_picard
from .tables import loglog_slope, ordered_map

DEFAULT_TAUS = tuple(2.0 ** -k for k in range(0, 9))


def dtn_apply(mesh: TriangleMesh, coeffA: CoefficientA, coeffC, g, return_solution: bool = False,
              **solver_kwargs):
    """Pairing vector of the nonlinear DtN map applied to ``g``."""
    u, report = solve_quasilinear_picard(mesh, coeffA, coeffC, g, **solver_kwargs)
    r = nonlinear_residual(mesh, coeffA, coeffC, u)[mesh.boundary_nodes]
    return (r, u, report) if return_solution else r


def linear_operator(mesh: TriangleMesh, a0: float, coeffC):
    return assemble(mesh, a0, _c_values(mesh, coeffC))


def dtn_linearized(mesh: TriangleMesh, a0: float, coeffC, alpha: float | None = None):
    """Dense DtN matrix of ``-a0 Delta v + c v = 0``.

    Column ``j`` is the pairing vector of the solution with boundary data equal
    to the ``j``-th boundary hat function (a Schur complement of the system).
    """
    if alpha is not None and not (alpha <= a0 <= 1.0 / alpha):
        raise ValueError(f"a0={a0} outside [{alpha}, {1 / alpha}]")
    if isinstance(coeffC, CoefficientC) and not (coeffC.alpha <= a0 <= 1.0 / coeffC.alpha):
        raise ValueError(f"a0={a0} outside the admissible range of alpha={coeffC.alpha}")
    S = linear_operator(mesh, a0, coeffC).matrix
    I, B = mesh.interior_nodes, mesh.boundary_nodes
    S_IB = S[I][:, B].toarray()
    lu = spla.splu(S[I][:, I].tocsc())
    X = lu.solve(S_IB)
    return S[B][:, B].toarray() - S[B][:, I] @ X


def linear_response(mesh: TriangleMesh, a0: float, coeffC, g, method: str = "direct"):
    """``Lambda* g`` by one solve (no matrix)."""
    op = linear_operator(mesh, a0, coeffC)
    v = solve_dirichlet(op, g, method=method)
    return (op.matrix @ v)[mesh.boundary_nodes], v


def linearization_limit(mesh: TriangleMesh, coeffA: CoefficientA, coeffC, g_star, taus=DEFAULT_TAUS,
                        threads: int = 1, **solver_kwargs):
    """Deviation of ``(1/tau) Lambda(tau g*)`` from ``Lambda*_{a(0),c} g*``.

    Returns a list of ``(tau, deviation)`` with the deviation measured in the
    boundary dual norm (:func:`dtnlab.fem.dual_norm`).
    """
    taus = [float(t) for t in taus]
    if any(t <= 0 for t in taus):
        raise ValueError("tau values must be positive")
    g_star = np.asarray(g_star, dtype=float)
    ref, _ = linear_response(mesh, float(coeffA(0.0)), coeffC, g_star)

    def one(tau):
        r = dtn_apply(mesh, coeffA, coeffC, tau * g_star, **solver_kwargs)
        return tau, dual_norm(mesh, r / tau - ref)

    return ordered_map(one, taus, threads)


def limit_summary(table, tail: int = 4) -> dict:
    taus = np.array([t for t, _ in table])
    dev = np.array([d for _, d in table])
    last = dev[-tail:]
    positive = dev > 0
    slope = loglog_slope(taus[positive], dev[positive]) if positive.sum() >= 2 else float("nan")
    return {
        "max_deviation": float(dev.max()),
        "tail_monotone": bool(np.all(np.diff(last) <= 0)),
        "slope": slope,
    }


def orthogonality_terms(mesh: TriangleMesh, pair1, pair2, g_star):
    """Both sides of the linear orthogonality relation for one boundary datum.

    ``pair = (a_i(0), c_i)``. Returns ``(lhs, rhs)`` with
    ``lhs = <(Lambda*_1 - Lambda*_2) g, g>`` from the DtN matrices and
    ``rhs = (a1 - a2) int grad v1 . grad v2 + int (c1 - c2) v1 v2`` from the two
    solutions, both under the assembly quadrature.
    """
    (a1, c1), (a2, c2) = pair1, pair2
    g = np.asarray(g_star, dtype=float)
    L1 = dtn_linearized(mesh, a1, c1)
    L2 = dtn_linearized(mesh, a2, c2)
    lhs = float(g @ ((L1 - L2) @ g))
    _, v1 = linear_response(mesh, a1, c1, g)
    _, v2 = linear_response(mesh, a2, c2, g)
    dc = _c_values(mesh, c1) - _c_values(mesh, c2)
    rhs = float((a1 - a2) * (v1 @ (stiffness(mesh) @ v2)) + np.sum(lumped_mass(mesh) * dc * v1 * v2))
    return lhs, rhs
