import numpy as np
import pytest

from dtnlab.coeffs import CoefficientA, CoefficientC
from dtnlab.fem import l2_norm
from dtnlab.mesh import Region, generate
from dtnlab.recon import (Observation, ReconstructionError, au_gradient_check, c_gradient_check,
                          harmonic_boundary_data, prolongate_boundary, prolongate_nodal,
                          recover_a0, recover_au, recover_c, restrict_pairings, synthesize, unswept)

ALPHA = 0.4
U_GRID = np.linspace(-1.0, 1.0, 11)


def clamped_a(rise=0.5):
    return CoefficientA.from_function(lambda u: 1.0 + rise * min(max(u, 0.0), 1.0),
                                      np.linspace(-5, 5, 101), ALPHA)


def bump(x, y):
    return 0.5 * np.exp(-8 * ((x - 0.5) ** 2 + (y - 0.5) ** 2))


@pytest.fixture(scope="module")
def mesh():
    return generate(Region.UNIT_SQUARE, 12)


@pytest.fixture(scope="module")
def c_known(mesh):
    return CoefficientC.from_function(mesh, lambda x, y: 0.3 + 0.2 * x, ALPHA)


def small_data(mesh):
    return harmonic_boundary_data(mesh, 3, 0.01, symmetric=True)


def test_a0_recovered_without_guard(mesh, c_known):
    obs = synthesize(mesh, CoefficientA.constant(1.3, alpha=ALPHA), c_known.values, small_data(mesh),
                     guard=False)
    a0, report = recover_a0(obs, c_known, ALPHA)
    assert abs(a0 - 1.3) <= 1e-3
    assert report.status == "converged"


def test_a0_scaling_invariance(mesh, c_known):
    a = clamped_a()
    obs = synthesize(mesh, a, c_known.values, small_data(mesh), guard=False)
    a1, _ = recover_a0(obs, c_known, ALPHA)
    a2, _ = recover_a0(obs.scaled(2.0), c_known, ALPHA)
    assert abs(a1 - a2) <= 1e-6


def test_a0_noise_median(mesh, c_known):
    a = CoefficientA.constant(1.3, alpha=ALPHA)
    errs = []
    for seed in range(10):
        obs = synthesize(mesh, a, c_known.values, small_data(mesh), guard=False, noise=0.01, seed=seed)
        errs.append(abs(recover_a0(obs, c_known, ALPHA)[0] - 1.3))
    assert np.median(errs) <= 5e-2


def test_a0_rejects_large_and_zero_data(mesh, c_known):
    G = harmonic_boundary_data(mesh, 1, 0.5)
    with pytest.raises(ValueError):
        recover_a0(Observation(mesh, G, np.zeros_like(G)), c_known, ALPHA)
    Z = np.zeros_like(G)
    with pytest.raises(ReconstructionError):
        recover_a0(Observation(mesh, Z, Z), c_known, ALPHA)


def test_c_zero_truth_stays_zero(mesh):
    obs = synthesize(mesh, CoefficientA.constant(1.1, alpha=ALPHA), None, small_data(mesh), guard=False)
    c, report = recover_c(obs, 1.1, ALPHA, beta=1e-8)
    assert np.max(np.abs(c.values)) <= 1e-3
    assert report.iterations == 0


def test_c_objective_nonincreasing(mesh):
    a = CoefficientA.constant(1.0, alpha=ALPHA)
    obs = synthesize(mesh, a, bump, harmonic_boundary_data(mesh, 4, 0.01, symmetric=True))
    _, report = recover_c(obs, 1.0, ALPHA, beta=1e-8, max_iter=10)
    assert report.iterations > 0
    assert np.all(np.diff(report.objective_history) <= 0)


def test_c_error_decreases_with_beta(mesh):
    a = CoefficientA.constant(1.0, alpha=ALPHA)
    c_true = CoefficientC.from_function(mesh, bump, ALPHA).values
    obs = synthesize(mesh, a, c_true, harmonic_boundary_data(mesh, 4, 0.01), guard=False)
    errs = []
    for beta in (1e-4, 1e-6, 1e-8):
        c, _ = recover_c(obs, 1.0, ALPHA, beta=beta, max_iter=40)
        errs.append(l2_norm(mesh, c.values - c_true) / l2_norm(mesh, c_true))
    assert errs[0] > errs[1] > errs[2]


def test_c_gradient(mesh):
    rng = np.random.default_rng(5)
    obs = synthesize(mesh, CoefficientA.constant(1.0, alpha=ALPHA), bump, small_data(mesh))
    c = rng.uniform(0.1, 0.6, mesh.n_vertices)
    errs = c_gradient_check(obs, 1.0, c, rng.normal(size=(5, mesh.n_vertices)))
    assert max(errs) <= 1e-4


def test_au_gradient():
    coarse = generate(Region.UNIT_SQUARE, 8)
    G = harmonic_boundary_data(coarse, 1, 0.6)
    c = CoefficientC.from_function(coarse, bump, ALPHA)
    obs = synthesize(coarse, clamped_a(), c.values, G, guard=False)
    rng = np.random.default_rng(7)
    guess = CoefficientA(U_GRID, rng.uniform(0.8, 1.6, U_GRID.size), ALPHA)
    n_free = U_GRID.size - 1
    errs = au_gradient_check(obs, c, guess, rng.normal(size=(5, n_free)))
    assert max(errs) <= 1e-4


def test_au_truth_start_zero_iterations(mesh, c_known):
    truth = CoefficientA(U_GRID, clamped_a()(U_GRID), ALPHA)
    obs = synthesize(mesh, truth, c_known.values, harmonic_boundary_data(mesh, 1, 0.5), guard=False)
    a, report = recover_au(obs, c_known, 1.0, U_GRID, ALPHA, a_init=truth)
    assert report.iterations == 0
    assert report.misfit_history[0] <= 1e-20
    assert np.array_equal(a.a_values, truth.a_values)


def test_au_small_amplitude_flags_unswept(mesh, c_known):
    obs = synthesize(mesh, clamped_a(), c_known.values, harmonic_boundary_data(mesh, 1, 0.1),
                     guard=False)
    _, report = recover_au(obs, c_known, 1.0, U_GRID, ALPHA, max_iter=2)
    flagged = set(report.unswept_knots)
    assert {k for k in range(U_GRID.size) if U_GRID[k] > 0.2} <= flagged
    assert report.visited_range[1] <= 0.1 + 1e-12


def test_au_recovery_noiseless(mesh):
    a_true = clamped_a()
    c = CoefficientC(np.zeros(mesh.n_vertices), ALPHA)
    G = np.concatenate([harmonic_boundary_data(mesh, 2, amp) for amp in (0.25, 0.5, 1.0)])
    obs = synthesize(mesh, a_true, None, G, guard=False)
    grid = np.linspace(-1.0, 1.0, 9)
    a, report = recover_au(obs, c, 1.0, grid, ALPHA, beta=1e-8)
    swept = [k for k in range(grid.size) if k not in report.unswept_knots]
    assert np.max(np.abs(a.a_values - a_true(grid))[swept]) <= 5e-2
    assert np.all(np.diff(report.objective_history) <= 0)


def test_unswept_helper():
    knots, intervals = unswept(np.array([-1.0, 0.0, 0.5, 1.0]), (-0.2, 0.3))
    assert knots == [0, 2, 3]
    assert intervals == [[0.5, 1.0]]


def test_transfer_operators_are_adjoint(mesh):
    rng = np.random.default_rng(0)
    nb = len(mesh.boundary_nodes)
    g, r = rng.normal(size=nb), rng.normal(size=2 * nb)
    assert prolongate_boundary(g) @ r == pytest.approx(g @ restrict_pairings(r), rel=1e-12)
    x, y = mesh.vertices.T
    fine = prolongate_nodal(mesh, 2 * x - y)
    from dtnlab.mesh import refine
    fx, fy = refine(mesh).vertices.T
    assert np.allclose(fine, 2 * fx - fy, atol=1e-14)


def test_observation_roundtrip(tmp_path, mesh, c_known):
    obs = synthesize(mesh, clamped_a(), c_known.values, small_data(mesh), guard=False, noise=0.01)
    path = tmp_path / "obs.json"
    obs.save(path)
    back = Observation.load(path)
    assert np.array_equal(back.boundary_data, obs.boundary_data)
    assert np.array_equal(back.responses, obs.responses)
    assert back.noise == 0.01 and not back.inverse_crime_guard
    with pytest.raises(ValueError):
        Observation(mesh, obs.boundary_data, obs.responses[:, :-1])


def test_guard_requires_callable_c(mesh, c_known):
    with pytest.raises(ValueError):
        synthesize(mesh, clamped_a(), c_known.values, small_data(mesh), guard=True)
