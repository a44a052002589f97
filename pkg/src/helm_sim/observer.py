"""Kinematic observer for a constant inertial current."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from . import dual as dm
from .model import VesselState


class ObserverState(NamedTuple):
    x_hat: Any
    y_hat: Any
    Vx_hat: Any
    Vy_hat: Any


@dataclass(frozen=True)
class ObserverGains:
    kx1: float = 1.0
    ky1: float = 1.0
    kx2: float = 0.1
    ky2: float = 0.1
    #: the current-estimate bound needs kx2 == ky2; set False to allow otherwise
    equal_integral_gains: bool = True

    def __post_init__(self):
        if min(self.kx1, self.ky1, self.kx2, self.ky2) <= 0.0:
            raise ValueError("observer gains must be positive")
        if self.equal_integral_gains and self.kx2 != self.ky2:
            raise ValueError("kx2 and ky2 must be equal (set equal_integral_gains=False to override)")


class PathFrameEstimates(NamedTuple):
    VT_hat: Any
    VN_hat: Any
    dVT_hat: Any
    dVN_hat: Any


def initial_state(x: float, y: float) -> ObserverState:
    """Start at the measured position with a zero current estimate."""
    return ObserverState(x, y, 0.0, 0.0)


def observer_derivatives(
    o: ObserverState, g: ObserverGains, s: VesselState, meas: tuple[Any, Any]
) -> ObserverState:
    xt = meas[0] - o.x_hat
    yt = meas[1] - o.y_hat
    cpsi, spsi = dm.cos(s.psi), dm.sin(s.psi)
    return ObserverState(
        x_hat=s.u_r * cpsi - s.v_r * spsi + o.Vx_hat + g.kx1 * xt,
        y_hat=s.u_r * spsi + s.v_r * cpsi + o.Vy_hat + g.ky1 * yt,
        Vx_hat=g.kx2 * xt,
        Vy_hat=g.ky2 * yt,
    )


def path_frame_estimates(
    o: ObserverState, gamma_p: Any, gamma_dot: Any, xt: Any, yt: Any, g: ObserverGains
) -> PathFrameEstimates:
    """Current estimate rotated into the path frame, with its time derivative."""
    cg, sg = dm.cos(gamma_p), dm.sin(gamma_p)
    VT = o.Vx_hat * cg + o.Vy_hat * sg
    VN = -o.Vx_hat * sg + o.Vy_hat * cg
    dVT = g.kx2 * xt * cg + g.ky2 * yt * sg + VN * gamma_dot
    dVN = -g.kx2 * xt * sg + g.ky2 * yt * cg - VT * gamma_dot
    return PathFrameEstimates(VT, VN, dVT, dVN)


def error_matrix(g: ObserverGains) -> np.ndarray:
    """State matrix of the error dynamics for (x~, y~, Vx~, Vy~)."""
    return np.array(
        [
            [-g.kx1, 0.0, 1.0, 0.0],
            [0.0, -g.ky1, 0.0, 1.0],
            [-g.kx2, 0.0, 0.0, 0.0],
            [0.0, -g.ky2, 0.0, 0.0],
        ]
    )


def lyapunov_W(xt: Any, yt: Any, Vxt: Any, Vyt: Any, g: ObserverGains) -> Any:
    return xt * xt + yt * yt + Vxt * Vxt / g.kx2 + Vyt * Vyt / g.ky2
