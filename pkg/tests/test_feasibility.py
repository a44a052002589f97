import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from helm_sim.feasibility import check_assumptions, sigma_from_delta, tune
from helm_sim.model import Environment, load_vessel
from helm_sim.path import Circle, Line

VESSEL = load_vessel("synthetic")
ENV = Environment(-1.0, 1.2)
CIRCLE = Circle(radius=400.0)


def test_case_study_assumptions_pass():
    a = check_assumptions(ENV, 5.0, VESSEL)
    assert a.passed
    assert a.propulsion.margin == pytest.approx(5.0 - 2 * 1.5620499, rel=1e-6)


def test_slow_reference_fails_propulsion():
    a = check_assumptions(ENV, 3.0, VESSEL)
    assert not a.propulsion.passed and a.current_bound.passed and a.sway_damped.passed
    assert not a.passed


def test_zero_current_passes():
    assert check_assumptions(Environment(0.0, 0.0), 0.5, VESSEL).passed


def test_current_above_bound_fails():
    assert not check_assumptions(Environment(-1.0, 1.2, Vmax=1.0), 5.0, VESSEL).current_bound.passed


def test_case_study_tuning():
    r = tune(CIRCLE, VESSEL, ENV, 5.0, 40.0)
    assert r.kappa_max == 0.0025
    assert r.V_max == pytest.approx(1.5620, abs=1e-3)
    assert r.lemma2_bound == pytest.approx(0.1333, rel=0.05)
    assert r.sigma == pytest.approx(0.0025 / (r.lemma2_bound - 4 * 1.0 / 40.0 * 1.0), rel=0.02)
    assert r.sigma == pytest.approx(r.X_max * 0.0025 / (r.Y_min - 4 * r.X_max / 40.0))
    assert r.tube_radius_sigma == pytest.approx(369.983, rel=5e-3)
    assert r.tube_radius_param == 400.0
    assert r.tube_radius_sigma <= r.tube_radius_param
    assert r.passed


def test_large_delta_limit():
    r = tune(CIRCLE, VESSEL, ENV, 5.0, 1e12)
    limit = 0.0025 * r.X_max / r.Y_min
    assert r.sigma == pytest.approx(limit, rel=1e-9)
    assert r.tube_radius_sigma == pytest.approx((1 - limit) / 0.0025, rel=1e-9)


def test_straight_line_has_unbounded_tube():
    r = tune(Line(), VESSEL, ENV, 5.0, 40.0)
    assert r.sigma == 0.0
    assert r.tube_radius_sigma == math.inf and r.tube_radius_param == math.inf
    assert json.loads(r.to_json())["tube_radius_sigma"] == "inf"


def test_tight_circle_fails_lemma2():
    r = tune(Circle(radius=5.0), VESSEL, ENV, 5.0, 40.0)
    assert not r.lemma2.passed and not r.lemma3.passed and not r.passed


def test_delta_too_small():
    r = tune(CIRCLE, VESSEL, ENV, 5.0, 20.0)
    assert r.sigma == math.inf and not r.lemma3.passed
    assert any("Delta too small" in n for n in r.notes)
    assert r.delta_bound == pytest.approx(4 * r.X_max / (r.Y_min - r.X_max * 0.0025))


def test_lemma3_verdict_agrees_with_strict_inequalities():
    """lemma 3 holds iff some sigma' in (0, 1) satisfies both strict inequalities."""
    for Delta in (25.0, 30.0, 31.0, 35.0, 40.0, 80.0, 300.0):
        r = tune(CIRCLE, VESSEL, ENV, 5.0, Delta)
        found = False
        for k in range(1, 10000):
            s = k / 10000.0
            den = r.Y_min - r.X_max * r.kappa_max / s
            if den > 0 and Delta > 4 * r.X_max / den and r.kappa_max < s * r.Y_min / r.X_max:
                found = True
                break
        assert r.lemma3.passed == found, Delta


def test_initial_condition_admission():
    assert tune(CIRCLE, VESSEL, ENV, 5.0, 40.0, initial_y_bp=-300.071).initial_in_tube.passed
    r = tune(CIRCLE, VESSEL, ENV, 5.0, 40.0, initial_y_bp=500.0)
    assert not r.initial_in_tube.passed and not r.passed


@settings(max_examples=60)
@given(st.floats(35.0, 1000.0), st.floats(1.001, 3.0))
def test_larger_delta_gives_smaller_sigma_and_larger_tube(Delta, factor):
    a = tune(CIRCLE, VESSEL, ENV, 5.0, Delta)
    b = tune(CIRCLE, VESSEL, ENV, 5.0, Delta * factor)
    assert b.sigma < a.sigma
    assert b.tube_radius_sigma > a.tube_radius_sigma


def test_sigma_from_delta_sentinel():
    assert sigma_from_delta(1.0, 0.1, 0.0025, 39.0) == math.inf


def test_report_is_deterministic_and_serialisable():
    a, b = tune(CIRCLE, VESSEL, ENV, 5.0, 40.0), tune(CIRCLE, VESSEL, ENV, 5.0, 40.0)
    assert a == b
    d = json.loads(a.to_json())
    assert d["passed"] is True and d["lemma2"]["passed"] is True
    assert "tube ((1-sigma)/kappa)" in a.to_text()
