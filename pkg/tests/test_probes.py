import numpy as np
import pytest

from dtnlab.coeffs import CoefficientA, CoefficientC
from dtnlab.mesh import Region, generate
from dtnlab.probes import (CapDatum, HarmonicPolynomial, SingularProbe, a0_dichotomy_sweep,
                           au_dichotomy_sweep, au_identity_check, au_sweep_summary,
                           cap_datum_evaluate, cap_integral_2d_flat, cap_integral_3d_flat,
                           evaluate_probe, probe_laplacian_residual)


def test_fundamental_value():
    probe = SingularProbe.fundamental((2.0, 0.0))
    assert evaluate_probe(probe, np.array([1.0, 0.0])) == pytest.approx(0.0, abs=1e-15)


def test_normal_derivative_value():
    eps = 0.1
    probe = SingularProbe.normal_derivative((0.0, 0.0), (0.0, 1.0), eps)
    t = np.linspace(-1, 1, 7)
    x = np.stack([t, np.zeros_like(t)], axis=-1)
    assert np.allclose(probe.value(x), -eps / (t ** 2 + eps ** 2), rtol=1e-14)


@pytest.mark.parametrize("probe", [
    SingularProbe.fundamental((0.3, -0.4)),
    SingularProbe.normal_derivative((0.5, 0.0), (0.0, -1.0), 0.2),
    SingularProbe.normal_derivative((0.0, 0.0, 0.0), (0.0, 0.0, -1.0), 0.3),
    HarmonicPolynomial(3, "im"),
])
def test_gradients_match_finite_differences(probe):
    dim = probe.source.size if isinstance(probe, SingularProbe) else 2
    x = np.full(dim, 0.37) + 0.1 * np.arange(dim)
    h = 1e-6
    fd = [(probe.value(x + h * e) - probe.value(x - h * e)) / (2 * h) for e in np.eye(dim)]
    assert np.allclose(probe.gradient(x), fd, rtol=1e-6, atol=1e-8)


def test_probe_harmonic_on_mesh():
    probe = SingularProbe.normal_derivative((0.5, 0.0), (0.0, -1.0), 0.5)
    res = [probe_laplacian_residual(generate(Region.UNIT_SQUARE, n), probe) for n in (32, 64, 128)]
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(orders >= 1.7)


def test_probe_outside_check():
    mesh = generate(Region.UNIT_SQUARE, 4)
    with pytest.raises(ValueError):
        SingularProbe.fundamental((0.5, 0.5)).check_outside(mesh)


def test_cap_datum_values():
    cap = CapDatum((0.0, 0.0), 0.1, 0.3, 2.0, -1.0)
    assert cap_datum_evaluate(cap, np.array([0.1, 0.0])) == pytest.approx(2.0)
    assert cap_datum_evaluate(cap, np.array([0.0, 0.2])) == pytest.approx(0.5)
    assert cap_datum_evaluate(cap, np.array([0.6, 0.0])) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        CapDatum((0.0, 0.0), 0.3, 0.1, 1.0, 0.0)


def test_cap_integrals():
    c3 = cap_integral_3d_flat(1.0, 1.0)
    assert c3.closed_form == pytest.approx(-2 ** -1.5)
    assert c3.error <= 1e-8
    c2 = cap_integral_2d_flat(1.0, 1.0)
    assert c2.closed_form == pytest.approx(-1.0)
    assert c2.error <= 1e-8
    for eps in (0.1, 0.01):
        assert cap_integral_2d_flat(eps, eps).closed_form == pytest.approx(-1.0 / eps)
        assert cap_integral_3d_flat(eps, eps).closed_form == pytest.approx(-1.0 / (2 ** 1.5 * eps))
        assert cap_integral_2d_flat(eps, eps).error <= 1e-8


def test_a0_sweep_zero_c_has_no_correction():
    mesh = generate(Region.UNIT_DISK, 16)
    rows = a0_dichotomy_sweep(mesh, (1.3, None), (0.9, None), [0.5, 0.25])
    for row in rows:
        assert abs(row.lhs - row.rhs) <= 1e-8 * max(1.0, abs(row.lhs))
        assert row.correction_norm < 0.05 * np.sqrt(row.I_low)


def test_a0_sweep_growth():
    mesh = generate(Region.UNIT_DISK, 24)
    c = CoefficientC.from_function(mesh, lambda x, y: 0.5 + 0.3 * x, 0.5)
    d = [0.5 * 2.0 ** -k for k in range(4)]
    rows = a0_dichotomy_sweep(mesh, (1.3, c), (0.9, None), d)
    grad = [r.I_grad for r in rows]
    low = np.array([r.I_low for r in rows])
    assert np.all(np.diff(grad) > 0)
    assert np.all(low <= 2 * low[0]) and np.all(low >= 0.5 * low[0])


@pytest.fixture(scope="module")
def square():
    return generate(Region.UNIT_SQUARE, 16)


def test_identity_equal_coefficients_vanish(square):
    a = CoefficientA.from_function(lambda u: 1 + 0.3 * np.tanh(u), np.linspace(-5, 5, 81), 0.5)
    g = 0.5 + 0.3 * square.vertices[square.boundary_nodes, 0]
    terms = au_identity_check(square, a, a, CoefficientC(np.full(square.n_vertices, 0.4), 0.5), g,
                              HarmonicPolynomial(2))
    assert max(abs(terms.lhs), abs(terms.rhs_volume), abs(terms.rhs_boundary)) <= 1e-9
    assert terms.holds()


def test_identity_special_cases(square):
    a1 = CoefficientA.from_function(lambda u: 1 + 0.5 * np.clip(u, 0, 1), np.linspace(-5, 5, 81), 0.5)
    a2 = CoefficientA.constant(1.0, alpha=0.5)
    g = 0.8 * square.vertices[square.boundary_nodes, 1] + 0.1
    zero = au_identity_check(square, a1, a2, None, g, HarmonicPolynomial(1, "im"))
    assert abs(zero.rhs_volume) == 0.0
    assert abs(zero.lhs - zero.rhs_boundary) <= 1e-6 * max(1.0, abs(zero.lhs))
    assert abs(zero.rhs_boundary - zero.rhs_boundary_analytic) <= 0.05 * abs(zero.rhs_boundary)
    c = CoefficientC.from_function(square, lambda x, y: 0.3 + x * y, 0.5)
    const = au_identity_check(square, a1, a2, c, g, HarmonicPolynomial(0))
    assert abs(const.rhs_boundary) <= 1e-12
    assert abs(const.lhs - const.rhs_volume) <= 1e-6 * max(1.0, abs(const.lhs))
    probe = SingularProbe.normal_derivative((0.5, 0.0), (0.0, -1.0), 0.3)
    assert au_identity_check(square, a1, a2, c, g, probe).holds(rtol=1e-6)


def test_au_sweep_small(square):
    a1 = CoefficientA.from_function(lambda u: 1 + 0.5 * np.clip(u, 0, 1), np.linspace(-5, 5, 81), 0.5)
    a2 = CoefficientA.constant(1.0, alpha=0.5)
    c = CoefficientC(np.full(square.n_vertices, 0.5), 0.5)
    eps = [0.2 * 2.0 ** -k for k in range(4)]
    rows = au_dichotomy_sweep(square, a1, a2, c, 1.0, 0.2, eps)
    for row in rows:
        assert abs(row.cap_term - row.cap_term_quadrature) <= 1e-8 * abs(row.cap_term)
    summary = au_sweep_summary(rows)
    assert summary["cap_slope"] == pytest.approx(-1.0, abs=0.2)
    assert summary["ring_ratio_decreasing"]
    with pytest.raises(ValueError):
        au_dichotomy_sweep(square, a2, a1, c, 1.0, 0.2, eps)
