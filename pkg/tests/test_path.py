import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from helm_sim.path import (
    Circle,
    Line,
    OutsideTubeError,
    ParametrisationSingularity,
    PathError,
    SinePath,
    frame_error,
    path_from_spec,
    project_initial_theta,
    theta_dot,
    tube_radius,
)

CIRCLE = Circle(radius=400.0)
SINE = SinePath(amplitude=10.0, wavenumber=0.01, length=3000.0)
PATHS = [Line(origin=(1.0, -2.0), heading=0.4), CIRCLE, Circle(radius=50.0, center=(3.0, 4.0), direction=-1), SINE]


def test_coincident_point_has_zero_error():
    for p in PATHS:
        pos = tuple(float(c) for c in p.position(123.4))
        fe = frame_error(p, 123.4, pos)
        assert fe.x_bp == pytest.approx(0.0, abs=1e-9)
        assert fe.y_bp == pytest.approx(0.0, abs=1e-9)


def test_circle_case_study_start():
    theta = 400.0 * math.atan2(10.0, 700.0)
    fe = frame_error(CIRCLE, theta, (700.0, 10.0))
    assert fe.x_bp == pytest.approx(0.0, abs=1e-9)
    assert fe.y_bp == pytest.approx(-(math.hypot(700.0, 10.0) - 400.0))
    assert fe.y_bp == pytest.approx(-300.071, abs=1e-3)


def test_line_frame_error():
    fe = frame_error(Line(), 5.0, (5.0, 2.0))
    assert (fe.x_bp, fe.y_bp) == (0.0, 2.0)


def test_projection_examples():
    assert project_initial_theta(CIRCLE, (700.0, 10.0)) == pytest.approx(400 * math.atan2(10, 700))
    assert project_initial_theta(CIRCLE, (700.0, 10.0)) == pytest.approx(5.714, abs=1e-3)
    assert project_initial_theta(Line(), (3.0, 1.0)) == pytest.approx(3.0)


def test_projection_matches_golden_section():
    pos = (700.0, 10.0)
    res = optimize.minimize_scalar(
        lambda t: math.hypot(*(np.subtract(CIRCLE.position(t), pos))), bounds=(0, 100), method="bounded",
        options={"xatol": 1e-10},
    )
    assert project_initial_theta(CIRCLE, pos) == pytest.approx(res.x, abs=1e-5)


def test_sine_projection_zeroes_along_track():
    pos = (812.0, 35.0)
    th = project_initial_theta(SINE, pos)
    assert abs(float(frame_error(SINE, th, pos).x_bp)) < 1e-6


def test_projection_outside_tube():
    with pytest.raises(OutsideTubeError):
        project_initial_theta(CIRCLE, (0.0, 900.0))
    with pytest.raises(OutsideTubeError):
        project_initial_theta(CIRCLE, (0.0, 0.0))


def test_theta_dot_examples():
    fe = frame_error(Line(), 0.0, (0.0, 0.0))
    assert theta_dot(Line(), fe, 5.0, 0.0, 0.5, 1.0) == pytest.approx(5.5)
    fe = type(fe)(x_bp=0.0, y_bp=-300.0, theta=0.0)
    gamma = float(CIRCLE.tangent_angle(0.0))
    assert theta_dot(CIRCLE, fe, 5.0, gamma, 0.0, 1.0) == pytest.approx(5 / 1.75)


def test_theta_dot_singularity():
    fe = type(frame_error(CIRCLE, 0.0, (400.0, 0.0)))(x_bp=0.0, y_bp=399.9999, theta=0.0)
    with pytest.raises(ParametrisationSingularity):
        theta_dot(CIRCLE, fe, 5.0, 0.0, 0.0, 1.0, sigma_floor=0.01)


def test_tube_radius():
    assert tube_radius(CIRCLE) == 400.0
    assert tube_radius(Line()) == math.inf
    assert tube_radius(SINE) == pytest.approx(1000.0)
    th = np.linspace(0, SINE.period_s, 200001)
    assert np.max(np.abs(SINE.curvature(th))) == pytest.approx(1e-3, rel=1e-6)


@pytest.mark.parametrize("p", PATHS, ids=lambda p: p.kind)
def test_unit_speed(p):
    th = np.linspace(10.0, 600.0, 97)
    h = 1e-4
    x1, y1 = p.position(th + h)
    x0, y0 = p.position(th - h)
    speed = np.hypot(np.subtract(x1, x0), np.subtract(y1, y0)) / (2 * h)
    np.testing.assert_allclose(speed, 1.0, atol=1e-9)


@pytest.mark.parametrize("p", PATHS, ids=lambda p: p.kind)
def test_tangent_rate_is_curvature(p):
    th = np.linspace(10.0, 600.0, 97)
    h = 1e-3
    dg = (np.asarray(p.tangent_angle(th + h)) - np.asarray(p.tangent_angle(th - h))) / (2 * h)
    np.testing.assert_allclose(dg, np.broadcast_to(p.curvature(th), th.shape), atol=1e-6)


@pytest.mark.parametrize("p", PATHS, ids=lambda p: p.kind)
@settings(max_examples=40, deadline=None)
@given(theta=st.floats(0.0, 900.0), d=st.floats(-30.0, 30.0))
def test_points_on_the_normal(p, theta, d):
    x, y = p.position(theta)
    g = float(p.tangent_angle(theta))
    pos = (float(x) - d * math.sin(g), float(y) + d * math.cos(g))
    fe = frame_error(p, theta, pos)
    assert abs(float(fe.x_bp)) < 1e-9 * (1 + math.hypot(*pos))
    assert float(fe.y_bp) == pytest.approx(d, abs=1e-9 * (1 + math.hypot(*pos)))


@settings(max_examples=60, deadline=None)
@given(
    theta=st.floats(0.0, 2000.0),
    px=st.floats(-100, 100),
    py=st.floats(-100, 100),
    shift=st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
    rot=st.floats(-math.pi, math.pi),
)
def test_rigid_motion_equivariance(theta, px, py, shift, rot):
    c = Circle(radius=400.0, center=(0.0, 0.0), start_angle=0.0)
    moved = Circle(radius=400.0, center=shift, start_angle=rot)
    x, y = c.position(theta)
    pos = (float(x) + px, float(y) + py)
    cr, sr = math.cos(rot), math.sin(rot)
    pos2 = (shift[0] + cr * pos[0] - sr * pos[1], shift[1] + sr * pos[0] + cr * pos[1])
    a, b = frame_error(c, theta, pos), frame_error(moved, theta, pos2)
    assert float(a.x_bp) == pytest.approx(float(b.x_bp), abs=1e-9 * 1e3)
    assert float(a.y_bp) == pytest.approx(float(b.y_bp), abs=1e-9 * 1e3)


def test_sine_arc_length_against_quadrature():
    from scipy import integrate

    x = 437.0
    ref, _ = integrate.quad(lambda t: math.sqrt(1 + (0.1 * math.cos(0.01 * t)) ** 2), 0, x, epsabs=1e-13)
    assert float(SINE.arc_length(x)) == pytest.approx(ref, rel=1e-12)
    s = float(SINE.arc_length(x))
    assert float(SINE.x_of_s(s)) == pytest.approx(x, abs=1e-9)


def test_path_specs_round_trip():
    for p in PATHS:
        assert path_from_spec(p.to_spec()) == p


def test_path_spec_errors():
    with pytest.raises(PathError, match="unknown path kind"):
        path_from_spec({"kind": "spiral"})
    with pytest.raises(PathError, match="missing"):
        path_from_spec({"kind": "circle"})
    with pytest.raises(PathError, match="unknown circle path keys"):
        path_from_spec({"kind": "circle", "radius": 1.0, "colour": 2})
