"""Surge and yaw control laws.

The yaw law needs the partial derivatives of the desired yaw rate with
respect to each of its twelve arguments.  They are obtained by seeding one
dual channel per argument and re-evaluating the closed-form desired yaw rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, NamedTuple, Sequence

from . import dual as dm
from .guidance import RdInputs, YawContext, YawTerms, yaw_rate_terms
from .model import VesselParams, VesselState, F_r, F_u, sway_accel
from .observer import ObserverGains

__all__ = [
    "ControlGains",
    "RdInputs",
    "RdPartials",
    "surge_control",
    "rd_partials",
    "assemble_hdot",
    "yaw_control",
]


@dataclass(frozen=True)
class ControlGains:
    k_u: float = 0.1
    k1: float = 1000.0
    k2: float = 400.0

    def __post_init__(self):
        if min(self.k_u, self.k1, self.k2) <= 0.0:
            raise ValueError("control gains must be positive")


class RdPartials(NamedTuple):
    dh: tuple  # with respect to (theta, v_r, u_r, u_rd, du_rd, VT_hat, VN_hat)
    dy_bp: Any
    dx_bp: Any
    dpsi_tilde: Any
    dx_tilde: Any
    dy_tilde: Any

    @classmethod
    def from_gradient(cls, grad: Sequence[Any]) -> "RdPartials":
        return cls(tuple(grad[:7]), *grad[7:12])


def surge_control(p: VesselParams, s: VesselState, u_rd: Any, du_rd: Any, k_u: float) -> Any:
    """Feedback-linearising surge law; the surge error then obeys d/dt u~ = -k_u u~.

    The damping is cancelled at the measured ``u_r``.  Cancelling it at ``u_rd``
    instead would leave the error rate at ``k_u + d11/m11``.
    """
    return -F_u(p, s.v_r, s.r) + du_rd + p.d11 / p.m11 * s.u_r - k_u * (s.u_r - u_rd)


def rd_partials(inp: RdInputs, ctx: YawContext) -> RdPartials:
    """Partials of r_d by forward-mode duals, one seeded channel per input."""
    grad = []
    for i in range(len(inp)):
        seeded = RdInputs(*(dm.Dual(v, 1.0 if j == i else 0.0) for j, v in enumerate(inp)))
        grad.append(dm.deriv_of(yaw_rate_terms(seeded, ctx).r_d))
    return RdPartials.from_gradient(grad)


def assemble_hdot(
    p: VesselParams,
    s: VesselState,
    terms: YawTerms,
    tau_u: Any,
    du_rd: Any,
    ddu_rd: Any,
) -> tuple:
    """Time derivative of ``h = (theta, v_r, u_r, u_rd, du_rd, VT_hat, VN_hat)``;
    every component is a known signal."""
    return (
        terms.theta_dot,
        sway_accel(p, s.u_r, s.v_r, s.r),
        F_u(p, s.v_r, s.r) - p.d11 / p.m11 * s.u_r + tau_u,
        du_rd,
        ddu_rd,
        terms.dVT_hat,
        terms.dVN_hat,
    )


def yaw_control(
    p: VesselParams,
    s: VesselState,
    inp: RdInputs,
    terms: YawTerms,
    partials: RdPartials,
    hdot: Sequence[Any],
    gains: ControlGains,
    k_delta: float,
    obs: ObserverGains,
) -> Any:
    r_tilde = s.r - terms.r_d
    ff = sum(d * hd for d, hd in zip(partials.dh, hdot))
    return (
        -F_r(p, s.u_r, s.v_r, s.r)
        + ff
        + partials.dy_bp * terms.ydot_known
        + partials.dx_bp * (-k_delta * inp.x_bp)
        + partials.dpsi_tilde * terms.C_r * r_tilde
        - partials.dx_tilde * obs.kx1 * inp.x_tilde
        - partials.dy_tilde * obs.ky1 * inp.y_tilde
        - gains.k1 * r_tilde
        - gains.k2 * inp.psi_tilde
    )

