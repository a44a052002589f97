import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from helm_sim.model import VesselState
from helm_sim.observer import (
    ObserverGains,
    ObserverState,
    error_matrix,
    initial_state,
    lyapunov_W,
    observer_derivatives,
    path_frame_estimates,
)
from helm_sim.sim import rk4_step

GAINS = ObserverGains()
VX, VY = -1.0, 1.2


def plant(t):
    """A vessel turning at constant rate with constant relative speed."""
    psi = 0.3 + 0.02 * t
    return VesselState(0.0, 0.0, psi, 5.0, 0.4, 0.02)


def plant_position_rate(s):
    c, sn = math.cos(s.psi), math.sin(s.psi)
    return s.u_r * c - s.v_r * sn + VX, s.u_r * sn + s.v_r * c + VY


def test_true_values_are_a_fixed_point_of_the_errors():
    s = VesselState(10.0, -4.0, 0.7, 5.0, 0.2, 0.0)
    d = observer_derivatives(ObserverState(10.0, -4.0, VX, VY), GAINS, s, (10.0, -4.0))
    assert (d.x_hat, d.y_hat) == pytest.approx(plant_position_rate(s))
    assert d.Vx_hat == 0.0 and d.Vy_hat == 0.0


def test_case_study_initialisation_error():
    o = initial_state(700.0, 10.0)
    err = (700.0 - o.x_hat, 10.0 - o.y_hat, VX - o.Vx_hat, VY - o.Vy_hat)
    assert err == (0.0, 0.0, VX, VY)


def test_error_system_is_stable():
    ev = np.linalg.eigvals(error_matrix(GAINS))
    # each axis has characteristic polynomial s^2 + s + 0.1
    expected = np.roots([1.0, 1.0, 0.1])
    np.testing.assert_allclose(np.sort(ev.real), np.sort(np.r_[expected, expected].real), rtol=1e-12)
    assert np.all(ev.real < 0)


def test_path_frame_rotation_examples():
    est = path_frame_estimates(ObserverState(0, 0, -1.0, 1.2), 0.0, 0.0, 0.0, 0.0, GAINS)
    assert (est.VT_hat, est.VN_hat) == (-1.0, 1.2)
    est = path_frame_estimates(ObserverState(0, 0, -1.0, 1.2), math.pi / 2, 0.0, 0.0, 0.0, GAINS)
    assert est.VT_hat == pytest.approx(1.2) and est.VN_hat == pytest.approx(1.0)
    est = path_frame_estimates(ObserverState(0, 0, -1.0, 1.2), 0.4, 0.0, 0.0, 0.0, GAINS)
    assert est.dVT_hat == 0.0 and est.dVN_hat == 0.0


@settings(max_examples=50)
@given(
    gamma=st.floats(-4, 4), gdot=st.floats(-0.1, 0.1), xt=st.floats(-5, 5), yt=st.floats(-5, 5),
    vx=st.floats(-2, 2), vy=st.floats(-2, 2),
)  # fmt: skip
def test_path_frame_rates_follow_the_chain_rule(gamma, gdot, xt, yt, vx, vy):
    o = ObserverState(0.0, 0.0, vx, vy)
    est = path_frame_estimates(o, gamma, gdot, xt, yt, GAINS)
    h = 1e-6

    def at(tau):
        oo = ObserverState(0.0, 0.0, vx + GAINS.kx2 * xt * tau, vy + GAINS.ky2 * yt * tau)
        e = path_frame_estimates(oo, gamma + gdot * tau, gdot, xt, yt, GAINS)
        return np.array([e.VT_hat, e.VN_hat])

    fd = (at(h) - at(-h)) / (2 * h)
    np.testing.assert_allclose([est.dVT_hat, est.dVN_hat], fd, atol=1e-8)


def simulate_observer(T=40.0, dt=0.01):
    """Integrate the plant position and the observer together; return errors over time."""

    def f(z):
        t = z[6]
        s = plant(t)._replace(x=z[0], y=z[1])
        px, py = plant_position_rate(s)
        d = observer_derivatives(ObserverState(*z[2:6]), GAINS, s, (z[0], z[1]))
        return np.array([px, py, *d, 1.0])

    z = np.array([700.0, 10.0, 700.0, 10.0, 0.0, 0.0, 0.0])
    out = [z]
    for _ in range(int(round(T / dt))):
        z = rk4_step(f, z, dt)
        out.append(z)
    z = np.array(out)
    err = np.column_stack([z[:, 0] - z[:, 2], z[:, 1] - z[:, 3], VX - z[:, 4], VY - z[:, 5]])
    return z[:, 6], err


def test_error_dynamics_match_matrix_exponential():
    t, err = simulate_observer()
    A = error_matrix(GAINS)
    for k in (500, 1500, 4000):
        ref = expm(A * t[k]) @ err[0]
        np.testing.assert_allclose(err[k], ref, rtol=1e-6, atol=1e-9)


def test_lyapunov_function_non_increasing():
    t, err = simulate_observer()
    W = lyapunov_W(*err.T, GAINS)
    assert np.all(np.diff(W) <= 1e-12)


def test_gain_validation():
    with pytest.raises(ValueError):
        ObserverGains(kx1=0.0)
    with pytest.raises(ValueError, match="equal"):
        ObserverGains(kx2=0.1, ky2=0.2)
    ObserverGains(kx2=0.1, ky2=0.2, equal_integral_gains=False)
