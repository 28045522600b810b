"""P1 finite elements for  -div(kappa grad w) + rho w = f  with Dirichlet data.

Conventions used throughout the package:

* stiffness terms use exact P1 gradients;
* zeroth-order terms and sources use vertex (lumped) quadrature, so
  ``int rho w v ~ sum_i m_i rho_i w_i v_i`` with ``m_i = sum_{T ni i} |T|/3``;
* boundary data are vectors over ``mesh.boundary_nodes``.

The discrete Laplacian splits into edge contributions,
``w^T K v = sum_e w_e (w_i - w_j)(v_i - v_j)`` with cotangent weights ``w_e``.
Edgewise coefficients (:func:`assemble_edges`) build on that split; the
quasilinear solver uses it to keep the discrete problem exactly equivalent to
its Kirchhoff-transformed form.
"""
from __future__ import annotations

import csv
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import LinearSolveError
from .mesh import TriangleMesh

_geometry_cache: "weakref.WeakKeyDictionary[TriangleMesh, dict]" = weakref.WeakKeyDictionary()


def _cache(mesh: TriangleMesh) -> dict:
    try:
        return _geometry_cache[mesh]
    except KeyError:
        d = _geometry_cache[mesh] = {}
        return d


def element_stiffness(mesh: TriangleMesh) -> np.ndarray:
    """(M, 3, 3) local stiffness matrices for kappa = 1."""
    c = _cache(mesh)
    if "Ke" not in c:
        G = mesh.gradients
        Ke = mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", G, G)
        Ke.setflags(write=False)
        c["Ke"] = Ke
    return c["Ke"]


def lumped_mass(mesh: TriangleMesh) -> np.ndarray:
    c = _cache(mesh)
    if "m" not in c:
        m = np.bincount(mesh.triangles.ravel(), weights=np.repeat(mesh.areas / 3.0, 3),
                        minlength=mesh.n_vertices)
        m.setflags(write=False)
        c["m"] = m
    return c["m"]


def boundary_mass(mesh: TriangleMesh) -> np.ndarray:
    """Lumped boundary mass per boundary node (half of each adjacent edge length)."""
    c = _cache(mesh)
    if "mb" not in c:
        L = mesh.boundary_edge_lengths
        mb = 0.5 * (L + np.roll(L, 1))
        mb.setflags(write=False)
        c["mb"] = mb
    return c["mb"]


def _triplets(mesh: TriangleMesh):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return rows, cols


def stiffness(mesh: TriangleMesh) -> sp.csr_matrix:
    """Unit-coefficient stiffness matrix (the discrete ``-Delta``)."""
    c = _cache(mesh)
    if "K" not in c:
        rows, cols = _triplets(mesh)
        n = mesh.n_vertices
        c["K"] = sp.csr_matrix((element_stiffness(mesh).ravel(), (rows, cols)), shape=(n, n))
    return c["K"]


def edge_weights(mesh: TriangleMesh):
    """Edges ``(E, 2)`` and weights ``w_e = -K_ij`` of the unit stiffness matrix."""
    c = _cache(mesh)
    if "w" not in c:
        e = mesh.edges
        K = stiffness(mesh)
        w = -np.asarray(K[e[:, 0], e[:, 1]]).ravel()
        w.setflags(write=False)
        c["w"] = w
    return mesh.edges, c["w"]


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Symmetric system matrix over all mesh vertices."""

    mesh: TriangleMesh
    matrix: sp.csr_matrix

    def __matmul__(self, v):
        return self.matrix @ v


def _check_rho(mesh, rho):
    if rho is None:
        return np.zeros(mesh.n_vertices)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (mesh.n_vertices,))
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    return rho


def assemble(mesh: TriangleMesh, kappa, rho=None) -> SparseOperator:
    """Assemble ``sum_T kappa_T int grad phi_i . grad phi_j + int rho phi_i phi_j``.

    Parameters
    ----------
    kappa : float or (M,) array
        Elementwise diffusion coefficient, strictly positive.
    rho : float or (N,) array, optional
        Nodal zeroth-order coefficient, nonnegative; integrated with vertex
        quadrature.
    """
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), (mesh.n_triangles,))
    if np.any(~(kappa > 0)):
        raise ValueError("kappa must be strictly positive on every element")
    rho = _check_rho(mesh, rho)
    rows, cols = _triplets(mesh)
    vals = (kappa[:, None, None] * element_stiffness(mesh)).ravel()
    n = mesh.n_vertices
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    A = A + sp.diags(lumped_mass(mesh) * rho)
    return SparseOperator(mesh, A.tocsr())


def assemble_edges(mesh: TriangleMesh, kappa_edge, rho=None) -> SparseOperator:
    """Stiffness with one coefficient per edge: ``sum_e kappa_e w_e (e_i - e_j)(e_i - e_j)^T``.

    For an edge-constant ``kappa_edge`` equal to a constant this coincides with
    :func:`assemble` with that constant.
    """
    edges, w = edge_weights(mesh)
    kappa_edge = np.broadcast_to(np.asarray(kappa_edge, dtype=float), (len(edges),))
    if np.any(~(kappa_edge > 0)):
        raise ValueError("edge coefficients must be strictly positive")
    rho = _check_rho(mesh, rho)
    n = mesh.n_vertices
    kw = kappa_edge * w
    i, j = edges[:, 0], edges[:, 1]
    diag = np.bincount(i, weights=kw, minlength=n) + np.bincount(j, weights=kw, minlength=n)
    diag = diag + lumped_mass(mesh) * rho
    rows = np.concatenate([i, j, np.arange(n)])
    cols = np.concatenate([j, i, np.arange(n)])
    vals = np.concatenate([-kw, -kw, diag])
    return SparseOperator(mesh, sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))


def _jacobi_cg(A, b, x0, rtol, maxiter):
    d = A.diagonal()
    M = spla.LinearOperator(A.shape, matvec=lambda r: r / d, dtype=float)
    x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter, M=M)
    if info != 0:
        res = np.linalg.norm(b - A @ x) / max(np.linalg.norm(b), 1e-300)
        raise LinearSolveError(f"CG did not converge in {maxiter} iterations (relative residual {res:.3e})")
    return x


class DirichletSolver:
    """Reusable Dirichlet solver for one operator.

    The interior block is eliminated symmetrically: ``S_II u_I = b_I - S_IB g``.
    ``method="direct"`` factorizes ``S_II`` once (sparse LU); ``"cg"`` runs
    Jacobi-preconditioned conjugate gradients for every right-hand side.
    """

    def __init__(self, op: SparseOperator, method: str = "direct", rtol: float = 1e-12,
                 maxiter: int | None = None):
        if method not in ("direct", "cg"):
            raise ValueError(f"unknown linear solver {method!r}")
        self.op = op
        self.mesh = op.mesh
        self.method = method
        self.rtol = rtol
        I, B = self.mesh.interior_nodes, self.mesh.boundary_nodes
        A = op.matrix
        self._A_II = A[I][:, I].tocsc()
        self._A_IB = A[I][:, B].tocsr()
        self.maxiter = maxiter or max(1000, 10 * len(I))
        self._lu = spla.splu(self._A_II) if method == "direct" and len(I) else None

    def solve_interior(self, rhs):
        if rhs.shape[0] == 0:
            return rhs.copy()
        if self._lu is not None:
            return self._lu.solve(rhs)
        if rhs.ndim == 1:
            return _jacobi_cg(self._A_II, rhs, None, self.rtol, self.maxiter)
        return np.column_stack([_jacobi_cg(self._A_II, r, None, self.rtol, self.maxiter) for r in rhs.T])

    def solve(self, g, f=None, u0=None):
        """Return the full nodal solution with trace ``g`` and nodal source ``f``."""
        mesh = self.mesh
        I, B = mesh.interior_nodes, mesh.boundary_nodes
        g = np.broadcast_to(np.asarray(g, dtype=float), (len(B),))
        rhs = -(self._A_IB @ g)
        if f is not None:
            f = np.broadcast_to(np.asarray(f, dtype=float), (mesh.n_vertices,))
            rhs = rhs + (lumped_mass(mesh) * f)[I]
        u = np.empty(mesh.n_vertices)
        u[B] = g
        if self._lu is None and len(I):
            x0 = None if u0 is None else np.asarray(u0, dtype=float)[I]
            u[I] = _jacobi_cg(self._A_II, rhs, x0, self.rtol, self.maxiter)
        else:
            u[I] = self.solve_interior(rhs)
        return u


def solve_dirichlet(op: SparseOperator, g, f=None, method: str = "cg", rtol: float = 1e-12,
                    maxiter: int | None = None):
    """Solve ``op u = m*f`` at interior vertices with ``u = g`` on the boundary.

    Raises :class:`~dtnlab.errors.LinearSolveError` when CG fails to reach
    ``rtol`` within ``maxiter`` iterations.
    """
    return DirichletSolver(op, method=method, rtol=rtol, maxiter=maxiter).solve(g, f)


def harmonic_extension(mesh: TriangleMesh, g, method: str = "direct"):
    return solve_dirichlet(assemble(mesh, 1.0), g, method=method)


# -- norms --------------------------------------------------------------------

def l2_norm(mesh: TriangleMesh, v) -> float:
    """L2 norm under vertex quadrature."""
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(np.sum(lumped_mass(mesh) * v * v)))


def h1_seminorm(mesh: TriangleMesh, v) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(max(v @ (stiffness(mesh) @ v), 0.0)))


def h1_norm(mesh: TriangleMesh, v) -> float:
    return float(np.hypot(h1_seminorm(mesh, v), l2_norm(mesh, v)))


def h_half_norm(mesh: TriangleMesh, g, method: str = "direct") -> float:
    """Trace norm surrogate: H1 norm of the discrete harmonic extension of ``g``."""
    g = np.asarray(g, dtype=float)
    if not np.any(g):
        return 0.0
    return h1_norm(mesh, harmonic_extension(mesh, g, method=method))


def dual_norm(mesh: TriangleMesh, r) -> float:
    """Norm of a boundary pairing vector, ``sqrt(sum r_k^2 / mb_k)``.

    ``r_k ~ <q, phi_k>`` for a boundary flux ``q``, so this approximates
    ``||q||_{L2(boundary)}`` independently of the mesh width.
    """
    r = np.asarray(r, dtype=float)
    return float(np.sqrt(np.sum(r * r / boundary_mass(mesh))))


# -- quadrature -----------------------------------------------------------------

# degree-5 seven-point rule on the reference triangle (barycentric coordinates, weights sum to 1)
_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
TRI7_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_a1, _b1, _b1], [_b1, _a1, _b1], [_b1, _b1, _a1],
    [_a2, _b2, _b2], [_b2, _a2, _b2], [_b2, _b2, _a2],
])
TRI7_WEIGHTS = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def quadrature_points(mesh: TriangleMesh):
    """Seven-point quadrature nodes ``(M, 7, 2)`` and weights ``(M, 7)`` (area included)."""
    p = mesh.vertices[mesh.triangles]
    pts = np.einsum("qk,tkd->tqd", TRI7_BARY, p)
    return pts, mesh.areas[:, None] * TRI7_WEIGHTS[None, :]


def interpolate_at_quadrature(mesh: TriangleMesh, v):
    return np.asarray(v, dtype=float)[mesh.triangles] @ TRI7_BARY.T


def l2_error(mesh: TriangleMesh, v, exact) -> float:
    """``||v_h - exact||_{L2}`` with the seven-point rule; ``exact(x, y)`` is vectorized."""
    pts, w = quadrature_points(mesh)
    diff = interpolate_at_quadrature(mesh, v) - exact(pts[..., 0], pts[..., 1])
    return float(np.sqrt(np.sum(w * diff * diff)))


def h1_semi_error(mesh: TriangleMesh, v, grad_exact) -> float:
    pts, w = quadrature_points(mesh)
    gh = np.einsum("ti,tid->td", np.asarray(v, float)[mesh.triangles], mesh.gradients)
    gx, gy = grad_exact(pts[..., 0], pts[..., 1])
    d2 = (gh[:, None, 0] - gx) ** 2 + (gh[:, None, 1] - gy) ** 2
    return float(np.sqrt(np.sum(w * d2)))


def gauss_legendre(n: int, a: float, b: float):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def composite_gauss(breaks, n: int = 20):
    """Nodes and weights of an ``n``-point Gauss rule on every interval of ``breaks``."""
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b > a:
            x, w = gauss_legendre(n, a, b)
            xs.append(x)
            ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def discrete_laplacian(mesh: TriangleMesh, v):
    """Nodal discrete ``-Delta v`` at interior vertices, ``(K v)_i / m_i``."""
    I = mesh.interior_nodes
    return (stiffness(mesh) @ np.asarray(v, float))[I] / lumped_mass(mesh)[I]


def write_field_csv(mesh: TriangleMesh, values, path, name: str = "value") -> None:
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex", "x", "y", name])
        for i, ((x, y), v) in enumerate(zip(mesh.vertices, values)):
            w.writerow([i, f"{x:.17e}", f"{y:.17e}", f"{v:.17e}"])
