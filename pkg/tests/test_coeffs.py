import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtnlab.coeffs import (CoefficientA, CoefficientC, kirchhoff_A, kirchhoff_H, load_json,
                           primitive_B)
from dtnlab.mesh import generate


def linear_a():
    return CoefficientA(np.array([0.0, 1.0]), np.array([1.0, 2.0]), 0.5)


def test_kirchhoff_examples():
    two = CoefficientA.constant(2.0)
    assert kirchhoff_A(two, 3.0) == pytest.approx(6.0)
    assert kirchhoff_H(two, 6.0) == pytest.approx(3.0)
    a = linear_a()
    assert kirchhoff_A(a, 1.0) == pytest.approx(1.5)
    assert kirchhoff_H(a, 1.5) == pytest.approx(1.0)
    assert kirchhoff_A(a, 0.0) == 0.0
    assert kirchhoff_H(a, 0.0) == 0.0


def test_clamped_extension():
    a = linear_a()
    assert a(-3.0) == 1.0
    assert a(4.0) == 2.0
    # beyond the last knot A grows with the end value
    assert kirchhoff_A(a, 3.0) == pytest.approx(1.5 + 2 * 2.0)
    assert kirchhoff_A(a, -2.0) == pytest.approx(-2.0)


def test_primitive_B_examples():
    one, two = CoefficientA.constant(1.0, alpha=0.5), CoefficientA.constant(2.0, alpha=0.5)
    assert primitive_B(two, one, 0.0, 1.0) == pytest.approx(1.0)
    assert primitive_B(two, two, -0.3, 0.7) == 0.0
    assert primitive_B(linear_a(), one, 0.0, 1.0) == pytest.approx(0.5)


def test_B_increasing_when_a1_above_a2():
    a1 = CoefficientA.from_function(lambda u: 1.5 + 0.2 * np.sin(u), np.linspace(-2, 2, 21), 0.5)
    a2 = CoefficientA.constant(1.0, alpha=0.5)
    u = np.linspace(-1.0, 2.0, 200)
    assert np.all(np.diff(primitive_B(a1, a2, -1.0, u)) > 0)


def test_admissibility_errors():
    with pytest.raises(ValueError):
        CoefficientA(np.array([0.0, 1.0]), np.array([1.0, 3.0]), 0.5)
    with pytest.raises(ValueError):
        CoefficientA(np.array([1.0, 0.0]), np.array([1.0, 1.0]), 0.5)
    with pytest.raises(ValueError):
        CoefficientA(np.array([0.0, 1.0]), np.array([1.0, 1.0]), 0.0)
    with pytest.raises(ValueError):
        CoefficientC(np.array([0.0, -0.1]), 0.5)
    with pytest.raises(ValueError):
        CoefficientC(np.array([0.0, 2.5]), 0.5)


def test_json_roundtrip(tmp_path):
    a = linear_a()
    p = tmp_path / "a.json"
    p.write_text(json.dumps(a.to_dict()))
    back = load_json(p)
    assert np.array_equal(back.u_grid, a.u_grid) and np.array_equal(back.a_values, a.a_values)
    mesh = generate("UnitSquare", 3)
    c = CoefficientC.from_function(mesh, lambda x, y: x * y, 0.5)
    p.write_text(json.dumps(c.to_dict()))
    assert np.array_equal(load_json(p).values, c.values)


@st.composite
def admissible(draw):
    n = draw(st.integers(2, 8))
    alpha = draw(st.floats(0.2, 0.9))
    steps = draw(st.lists(st.floats(0.05, 2.0), min_size=n - 1, max_size=n - 1))
    u = np.concatenate([[-3.0], -3.0 + np.cumsum(steps)])
    a = draw(st.lists(st.floats(alpha, 1.0 / alpha), min_size=n, max_size=n))
    return CoefficientA(u, np.array(a), alpha)


@settings(max_examples=60, deadline=None)
@given(admissible(), st.lists(st.floats(-6, 6), min_size=2, max_size=40))
def test_inverse_roundtrip(a, us):
    u = np.array(us)
    assert np.max(np.abs(kirchhoff_H(a, kirchhoff_A(a, u)) - u)) <= 1e-12 * max(1.0, np.max(np.abs(u)))


@settings(max_examples=60, deadline=None)
@given(admissible(), st.integers(0, 2 ** 31 - 1))
def test_lipschitz_bounds(a, seed):
    rng = np.random.default_rng(seed)
    u1, u2 = rng.uniform(-6, 6, (2, 100))
    dA = np.abs(kirchhoff_A(a, u2) - kirchhoff_A(a, u1))
    du = np.abs(u2 - u1)
    assert np.all(dA >= a.alpha * du * (1 - 1e-12))
    assert np.all(dA <= du / a.alpha * (1 + 1e-12))
    h = 1e-6
    q = (kirchhoff_A(a, u1 + h) - kirchhoff_A(a, u1)) / h
    assert np.all(q >= a.alpha * (1 - 1e-6)) and np.all(q <= (1 + 1e-6) / a.alpha)


@settings(max_examples=40, deadline=None)
@given(admissible(), st.floats(-5, 5), st.floats(-5, 5))
def test_secant_matches_difference_quotient(a, u1, u2):
    s = a.secant(np.array([u1]), np.array([u2]))[0]
    if abs(u1 - u2) > 1e-6:
        assert s == pytest.approx((kirchhoff_A(a, u1) - kirchhoff_A(a, u2)) / (u1 - u2), rel=1e-9)
    assert a.alpha * (1 - 1e-9) <= s <= (1 + 1e-9) / a.alpha
