import numpy as np
import pytest

from dtnlab.coeffs import CoefficientA, CoefficientC
from dtnlab.errors import ConvergenceError
from dtnlab.fem import assemble, l2_norm, solve_dirichlet
from dtnlab.mesh import Region, generate
from dtnlab.solver import (SolvePath, apriori_ratios, solve_quasilinear_kirchhoff,
                           solve_quasilinear_picard, uniqueness_check)

GRID = np.linspace(-5, 5, 201)


def rational_a():
    return CoefficientA.from_function(lambda u: 1 + u * u / (1 + u * u), GRID, 0.5)


def random_a(rng):
    knots = np.linspace(-2, 2, 9)
    return CoefficientA(knots, rng.uniform(0.6, 1.6, knots.size), 0.5)


@pytest.fixture(scope="module")
def square():
    return generate(Region.UNIT_SQUARE, 16)


def test_constant_a_single_iteration(square):
    c = CoefficientC.from_function(square, lambda x, y: 0.5 + 0.3 * x, 0.5)
    g = np.cos(2 * np.pi * square.boundary_arclength / 4)
    u, rep = solve_quasilinear_picard(square, CoefficientA.constant(1.4), c, g)
    assert rep.iterations == 1 and rep.converged
    v = solve_dirichlet(assemble(square, 1.4, c.values), g, method="direct")
    assert l2_norm(square, u - v) <= 1e-12


def test_zero_data_zero_solution(square):
    u, rep = solve_quasilinear_picard(square, rational_a(), None, 0.0)
    assert rep.iterations == 0
    assert np.all(u == 0)


def test_picard_matches_kirchhoff_rational(square):
    x = square.vertices[square.boundary_nodes, 0]
    a = rational_a()
    u1, r1 = solve_quasilinear_picard(square, a, None, x, tol=1e-12)
    u2, r2 = solve_quasilinear_kirchhoff(square, a, None, x, tol=1e-12)
    assert r2.path is SolvePath.KIRCHHOFF and r2.linear_solves == 1
    assert l2_norm(square, u1 - u2) <= 5e-8


def test_picard_matches_kirchhoff_random():
    mesh = generate(Region.UNIT_SQUARE, 32)
    rng = np.random.default_rng(11)
    a = random_a(rng)
    c = CoefficientC(rng.uniform(0, 1, mesh.n_vertices), 0.5)
    s = mesh.boundary_arclength
    g = 0.5 * np.sin(2 * np.pi * s / s.max())
    tol = 1e-12
    u1, _ = solve_quasilinear_picard(mesh, a, c, g, tol=tol)
    u2, _ = solve_quasilinear_kirchhoff(mesh, a, c, g, tol=tol)
    assert l2_norm(mesh, u1 - u2) <= 5e-8
    assert l2_norm(mesh, a.A(u1) - a.A(u2)) <= 10 * 1e-10


def test_kirchhoff_constant_a_is_linear(square):
    c = CoefficientC(np.full(square.n_vertices, 0.7), 0.5)
    g = np.sin(square.boundary_arclength)
    u, _ = solve_quasilinear_kirchhoff(square, CoefficientA.constant(2.0), c, g, tol=1e-13)
    v = solve_dirichlet(assemble(square, 2.0, c.values), g, method="direct")
    assert l2_norm(square, u - v) <= 1e-10


def test_uniqueness(square):
    rng = np.random.default_rng(2)
    g = np.sin(square.boundary_arclength)
    starts = [np.zeros(square.n_vertices), rng.normal(size=square.n_vertices)]
    assert uniqueness_check(square, CoefficientA.constant(1.0), None, g, starts) <= 1e-10
    tol = 1e-10
    starts.append(rng.uniform(-2, 2, square.n_vertices))
    assert uniqueness_check(square, rational_a(), None, g, starts, tol=tol) <= 10 * tol
    assert uniqueness_check(square, rational_a(), None, g, [starts[0], starts[0]]) == 0.0


def test_damped_matches_undamped(square):
    g = 0.8 * np.cos(square.boundary_arclength)
    a = rational_a()
    tol = 1e-11
    u1, _ = solve_quasilinear_picard(square, a, None, g, tol=tol)
    u2, rep = solve_quasilinear_picard(square, a, None, g, tol=tol, damping=0.5)
    assert l2_norm(square, u1 - u2) <= 10 * tol
    assert rep.damping <= 0.5


def test_apriori_ratio_stable(square):
    taus = [2.0 ** -k for k in range(9)]
    g = np.sin(square.boundary_arclength)
    ratios = apriori_ratios(square, rational_a(), None, g, taus)
    assert np.all(ratios <= 2 * ratios[0]) and np.all(ratios >= 0.5 * ratios[0])


def test_nonconvergence_carries_report(square):
    a = CoefficientA(np.array([0.0, 0.05]), np.array([0.2, 5.0]), 0.2)
    g = np.sin(square.boundary_arclength)
    with pytest.raises(ConvergenceError) as info:
        solve_quasilinear_picard(square, a, None, g, max_iter=3, adaptive=False)
    assert info.value.report is not None
    assert info.value.report.iterations == 3
    assert not info.value.report.converged


def test_rejects_bad_damping(square):
    with pytest.raises(ValueError):
        solve_quasilinear_picard(square, rational_a(), None, 0.0, damping=0.0)
