"""Current-compensating LOS guidance and the desired yaw rate.

The desired yaw rate is evaluated by :func:`yaw_rate_terms` from the twelve
signals ``(theta, v_r, u_r, u_rd, du_rd, VT_hat, VN_hat, y_bp, x_bp,
psi_tilde, x_tilde, y_tilde)``.  The heading itself is reconstructed as
``psi_d + psi_tilde`` so that the evaluator is a closed-form function of
exactly those inputs, which the control module differentiates with duals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, NamedTuple

from . import dual as dm
from .model import VesselParams, hydro_shape
from .observer import ObserverGains
from .path import Path

#: floor applied to sqrt(b^2 - ac) before it is used as a divisor
DISC_FLOOR = 1e-12


class GuidanceInfeasible(ValueError):
    """The normal current estimate is at least as large as the desired total speed."""


class Condition2Violation(ValueError):
    """|C_r| fell below the configured floor, so the yaw controller is ill defined."""


@dataclass(frozen=True)
class GuidanceGains:
    Delta: float = 40.0
    k_delta: float = 1.0

    def __post_init__(self):
        if not (self.Delta > 0.0 and self.k_delta > 0.0):
            raise ValueError("Delta and k_delta must be positive")


class GOffset(NamedTuple):
    g: Any
    a: Any
    b: Any
    c: Any
    dg_da: Any
    dg_db: Any
    dg_dc: Any
    #: dg/dVN_hat with (a, b, c) held fixed
    dg_dVN: Any
    #: sqrt(b^2 - ac) after flooring
    root: Any
    degenerate: Any


class GuidanceOutput(NamedTuple):
    psi_d: Any
    r_d: Any
    C_r: Any
    g: GOffset
    G1: Any


class RdInputs(NamedTuple):
    """Arguments of the desired yaw rate; the first seven form the bundle ``h``."""

    theta: Any
    v_r: Any
    u_r: Any
    u_rd: Any
    du_rd: Any
    VT_hat: Any
    VN_hat: Any
    y_bp: Any
    x_bp: Any
    psi_tilde: Any
    x_tilde: Any
    y_tilde: Any


H_FIELDS = RdInputs._fields[:7]


@dataclass(frozen=True)
class YawContext:
    vessel: VesselParams
    path: Path
    guidance: GuidanceGains
    observer: ObserverGains
    c_min: float = 0.05


class YawTerms(NamedTuple):
    r_d: Any
    C_r: Any
    psi_d: Any
    psi: Any
    goff: GOffset
    G1: Any
    theta_dot: Any
    gamma: Any
    gamma_dot: Any
    kappa: Any
    u_t: Any
    u_td: Any
    D: Any
    #: dy_bp/dt without the unknown normal-current error
    ydot_known: Any
    #: coefficient of Delta*VN_tilde/D in the heading-error dynamics
    bracket: Any
    dVT_hat: Any
    dVN_hat: Any
    margin: Any


def g_offset(u_td: Any, VN_hat: Any, y_bp: Any, Delta: float) -> GOffset:
    """Offset ``g`` solving ``u_td*g/sqrt(Delta^2 + (y+g)^2) = VN_hat`` and its partials."""
    a = VN_hat * VN_hat - u_td * u_td
    b = y_bp * VN_hat
    c = Delta * Delta + y_bp * y_bp
    disc = b * b - a * c
    root = dm.sqrt(dm.clamp_min(disc, DISC_FLOOR**2))
    ratio = (b + root) / (-a)
    g = VN_hat * ratio
    dg_da = VN_hat * c / (2.0 * a * root) + VN_hat * (b + root) / (a * a)
    dg_db = -VN_hat * (b + root) / (a * root)
    dg_dc = VN_hat / (2.0 * root)
    return GOffset(g, a, b, c, dg_da, dg_db, dg_dc, ratio, root, dm.value_of(disc) < DISC_FLOOR**2)


def solve_g(u_td: float, VN_hat: float, y_bp: float, Delta: float) -> GOffset:
    if not u_td * u_td - VN_hat * VN_hat > 0.0:
        raise GuidanceInfeasible(
            f"guidance infeasible: current exceeds speed (|VN_hat|={abs(VN_hat):.4g} >= u_td={u_td:.4g})"
        )
    return g_offset(u_td, VN_hat, y_bp, Delta)


def desired_heading(gamma_p: Any, v_r: Any, u_rd: Any, y_bp: Any, g: Any, Delta: float) -> Any:
    return gamma_p - dm.atan(v_r / u_rd) - dm.atan((y_bp + g) / Delta)


def perturbation_G1(
    psi_tilde: Any,
    u_tilde: Any,
    x_bp: Any,
    psi: Any,
    gamma_p: Any,
    y_bp: Any,
    g: Any,
    Delta: float,
    u_td: Any,
    gamma_dot: Any,
) -> Any:
    """Perturbation of the cross-track dynamics; zero when the heading, surge and
    along-track errors vanish."""
    sD = dm.sqrt(Delta * Delta + (y_bp + g) * (y_bp + g))
    sin_los = (y_bp + g) / sD
    cos_los = Delta / sD
    return (
        u_td * (1.0 - dm.cos(psi_tilde)) * sin_los
        + u_tilde * dm.sin(psi - gamma_p)
        + u_td * cos_los * dm.sin(psi_tilde)
        - x_bp * gamma_dot
    )


def coefficient_Cr(
    u_r: Any, u_rd: Any, v_r: Any, y_bp: Any, goff: GOffset, Delta: float, p: VesselParams
) -> Any:
    X = hydro_shape(p).X(u_r)
    D = Delta * Delta + (y_bp + goff.g) * (y_bp + goff.g)
    return 1.0 + X * u_rd / (u_rd * u_rd + v_r * v_r) - goff.dg_da * 2.0 * v_r * X * Delta / D


def guard_Cr(C_r: Any, c_min: float) -> Any:
    """C_r pushed away from zero to ``c_min`` (keeping its sign) for use as a divisor."""
    v = dm.value_of(C_r)
    xp = dm._xp(v)
    low = xp.abs(v) < c_min
    floor = xp.where(v < 0.0, -c_min, c_min)
    return dm.where(low, floor, C_r)


def yaw_rate_terms(inp: RdInputs, ctx: YawContext) -> YawTerms:
    """Desired yaw rate and every intermediate guidance signal."""
    theta, v, u, u_rd, du_rd, VT, VN, y, x, psit, xt, yt = inp
    Delta = ctx.guidance.Delta
    hx = hydro_shape(ctx.vessel)
    X, Y = hx.X(u), hx.Y(u)

    gamma = ctx.path.tangent_angle(theta)
    kappa = ctx.path.curvature(theta)
    speed2_d = u_rd * u_rd + v * v
    u_td = dm.sqrt(speed2_d)
    goff = g_offset(u_td, VN, y, Delta)
    yg = y + goff.g
    D = Delta * Delta + yg * yg
    sD = dm.sqrt(D)

    psi_d = desired_heading(gamma, v, u_rd, y, goff.g, Delta)
    psi = psi_d + psit
    uv = dm.value_of(u), dm.value_of(v)
    u_t = dm._xp(uv[0]).sqrt(uv[0] * uv[0] + uv[1] * uv[1])
    margin = 1.0 - kappa * y
    # u_t cos(chi - gamma) written without the course angle, which is undefined at rest
    along = u * dm.cos(psi - gamma) - v * dm.sin(psi - gamma)
    theta_dot = (along + VT + ctx.guidance.k_delta * x) / margin
    gamma_dot = kappa * theta_dot

    sg, cg = dm.sin(gamma), dm.cos(gamma)
    og = ctx.observer
    dVT = og.kx2 * xt * cg + og.ky2 * yt * sg + VN * gamma_dot
    dVN = -og.kx2 * xt * sg + og.ky2 * yt * cg - VT * gamma_dot

    G1 = perturbation_G1(psit, u - u_rd, x, psi, gamma, y, goff.g, Delta, u_td, gamma_dot)
    ydot_known = -u_td * y / sD + G1

    C_r = 1.0 + X * u_rd / speed2_d - goff.dg_da * 2.0 * v * X * Delta / D
    bracket = 1.0 + goff.dg_dc * 2.0 * y + goff.dg_db * VN
    g_rate_known = (
        goff.dg_dVN * dVN
        + goff.dg_da * (2.0 * VN * dVN - 2.0 * u_rd * du_rd - 2.0 * v * Y * v)
        + goff.dg_db * dVN * y
    )
    rest = (
        -gamma_dot
        + (Y * v * u_rd - du_rd * v) / speed2_d
        + Delta / D * (g_rate_known + bracket * ydot_known)
    )
    r_d = -rest / guard_Cr(C_r, ctx.c_min)
    return YawTerms(
        r_d=r_d,
        C_r=C_r,
        psi_d=psi_d,
        psi=psi,
        goff=goff,
        G1=G1,
        theta_dot=theta_dot,
        gamma=gamma,
        gamma_dot=gamma_dot,
        kappa=kappa,
        u_t=u_t,
        u_td=u_td,
        D=D,
        ydot_known=ydot_known,
        bracket=bracket,
        dVT_hat=dVT,
        dVN_hat=dVN,
        margin=margin,
    )


def rd_function(ctx: YawContext):
    """``r_d`` as a plain function of the twelve scalar inputs."""

    def f(*args):
        return yaw_rate_terms(RdInputs(*args), ctx).r_d

    return f


def desired_yaw_rate(inp: RdInputs, ctx: YawContext) -> GuidanceOutput:
    """Float front end of :func:`yaw_rate_terms` that raises on violated conditions."""
    VN, v, u_rd = float(inp.VN_hat), float(inp.v_r), float(inp.u_rd)
    if not u_rd > 0.0:
        raise ValueError("u_rd must be positive")
    solve_g(math.sqrt(u_rd**2 + v**2), VN, float(inp.y_bp), ctx.guidance.Delta)
    t = yaw_rate_terms(inp, ctx)
    if abs(float(t.C_r)) < ctx.c_min:
        raise Condition2Violation(f"|C_r| = {abs(float(t.C_r)):.4g} < c_min = {ctx.c_min}")
    return GuidanceOutput(psi_d=t.psi_d, r_d=t.r_d, C_r=t.C_r, g=t.goff, G1=t.G1)
