import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helm_sim import dual as dm
from helm_sim.dual import Dual


def richardson(f, x, h=1e-3):
    """Central difference with two levels of Richardson extrapolation (O(h^6))."""

    def D(k):
        return (f(x + k) - f(x - k)) / (2.0 * k)

    d1, d2, d3 = D(h), D(h / 2), D(h / 4)
    e1 = (4.0 * d2 - d1) / 3.0
    e2 = (4.0 * d3 - d2) / 3.0
    return (16.0 * e2 - e1) / 15.0


# smooth probes over {+, *, /, sin, cos, atan, atan2, sqrt}; divisors and
# radicands are kept away from zero so every probe is smooth everywhere
UNARY = {
    "sin": dm.sin,
    "cos": dm.cos,
    "atan": dm.atan,
    "sqrt": lambda a: dm.sqrt(1.0 + a * a),
}
BINARY = {
    "add": lambda a, b: a + b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / (1.5 + dm.sin(b)),
    "atan2": lambda a, b: dm.atan2(a, 2.0 + dm.cos(b)),
}


def random_probe(rng, depth):
    if depth == 0 or rng.random() < 0.2:
        c = float(rng.uniform(-2, 2))
        if rng.random() < 0.7:
            return lambda x: c * x
        return lambda x: x + c
    if rng.random() < 0.5:
        op = UNARY[rng.choice(list(UNARY))]
        inner = random_probe(rng, depth - 1)
        return lambda x: op(inner(x))
    op = BINARY[rng.choice(list(BINARY))]
    left, right = random_probe(rng, depth - 1), random_probe(rng, depth - 1)
    return lambda x: op(left(x), right(x))


def test_random_probes_match_richardson():
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for _ in range(1000):
        f = random_probe(rng, 4)
        x0 = float(rng.uniform(-1.5, 1.5))
        d = dm.derivative(f, x0)
        ref = richardson(lambda x: float(f(x)), x0)
        err = abs(d - ref) / max(abs(ref), 1.0)
        worst = max(worst, err)
    assert worst < 1e-8


def test_arithmetic_rules():
    a, b = Dual(2.0, 1.0), Dual(3.0, -2.0)
    assert (a * b).deriv == pytest.approx(1.0 * 3.0 + 2.0 * -2.0)
    q = a / b
    assert q.value == pytest.approx(2.0 / 3.0)
    assert q.deriv == pytest.approx((1.0 * 3.0 - 2.0 * -2.0) / 9.0)
    assert (2.0 - a).deriv == -1.0
    assert (1.0 / a).deriv == pytest.approx(-1.0 / 4.0)
    assert (a**3).deriv == pytest.approx(3 * 4.0)


def test_elementary_derivatives():
    x = 0.7
    assert dm.derivative(dm.sin, x) == pytest.approx(math.cos(x), rel=1e-15)
    assert dm.derivative(dm.cos, x) == pytest.approx(-math.sin(x), rel=1e-15)
    assert dm.derivative(dm.atan, x) == pytest.approx(1 / (1 + x * x), rel=1e-15)
    assert dm.derivative(dm.sqrt, x) == pytest.approx(0.5 / math.sqrt(x), rel=1e-15)
    assert dm.derivative(dm.exp, x) == pytest.approx(math.exp(x), rel=1e-15)


def test_atan2_partials():
    y, x = 0.3, -1.2
    r2 = x * x + y * y
    assert dm.deriv_of(dm.atan2(Dual(y, 1.0), x)) == pytest.approx(x / r2)
    assert dm.deriv_of(dm.atan2(y, Dual(x, 1.0))) == pytest.approx(-y / r2)


def test_zero_seed_gives_zero_derivative():
    def f(a, b):
        return dm.sin(a) * dm.atan2(b, a) + dm.sqrt(a * a + b * b)

    out = f(Dual(0.4, 0.0), Dual(-0.9, 0.0))
    assert dm.deriv_of(out) == 0.0
    assert dm.value_of(out) == pytest.approx(f(0.4, -0.9))


def test_constant_function_has_zero_derivative():
    assert dm.derivative(lambda x: 0.0 * x + 3.0, 1.2) == 0.0


def test_vector_channels():
    d = Dual(1.0, np.array([1.0, 0.0])) * Dual(2.0, np.array([0.0, 1.0]))
    np.testing.assert_allclose(d.deriv, [2.0, 1.0])


def test_gradient_matches_hand_result():
    g = dm.gradient(lambda a, b: a * a * b + dm.sin(b), [1.5, 0.2])
    np.testing.assert_allclose(g, [2 * 1.5 * 0.2, 1.5**2 + math.cos(0.2)], rtol=1e-15)


def test_clamp_min_kills_derivative_when_active():
    assert dm.deriv_of(dm.clamp_min(Dual(-1.0, 5.0), 0.0)) == 0.0
    assert dm.deriv_of(dm.clamp_min(Dual(2.0, 5.0), 0.0)) == 5.0


@given(st.floats(-50.0, 50.0, allow_nan=False))
def test_wrap_angle_range_and_equivalence(x):
    w = dm.wrap_angle(x)
    assert -math.pi < w <= math.pi + 1e-12
    assert math.cos(w) == pytest.approx(math.cos(x), abs=1e-9)
    assert math.sin(w) == pytest.approx(math.sin(x), abs=1e-9)


@settings(max_examples=50)
@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_comparisons_use_values(a, b):
    assert (Dual(a, 1.0) < Dual(b, -1.0)) == (a < b)
