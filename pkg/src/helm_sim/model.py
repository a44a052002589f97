"""3-DOF relative-velocity vessel model under a constant irrotational current."""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any, NamedTuple

from . import dual as dm

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class VesselParams:
    """Inertia and damping entries of the sway-yaw coupled model (SI units)."""

    m11: float
    m22: float
    m23: float
    m33: float
    d11: float
    d22: float
    d23: float
    d32: float
    d33: float

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ModelError(f"vessel parameter {f.name} is not finite: {v}")
        if min(self.m11, self.m22, self.m33) <= 0.0:
            raise ModelError("m11, m22 and m33 must be positive")
        if self.m22 * self.m33 - self.m23**2 <= 0.0:
            raise ModelError("m22*m33 - m23**2 must be positive")
        if self.d11 <= 0.0:
            raise ModelError("d11 must be positive")

    @property
    def det(self) -> float:
        return self.m22 * self.m33 - self.m23**2

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


class VesselState(NamedTuple):
    x: Any
    y: Any
    psi: Any
    u_r: Any
    v_r: Any
    r: Any


@dataclass(frozen=True)
class Environment:
    Vx: float = 0.0
    Vy: float = 0.0
    Vmax: float | None = None

    def __post_init__(self) -> None:
        if self.Vmax is None:
            object.__setattr__(self, "Vmax", self.speed)
        if not all(math.isfinite(v) for v in (self.Vx, self.Vy, self.Vmax)):
            raise ModelError("current components must be finite")

    @property
    def speed(self) -> float:
        return math.hypot(self.Vx, self.Vy)


class HydroCoeffs(NamedTuple):
    """X(u) = a_x*u + b_x and Y(u) = a_y*u + b_y."""

    a_x: float
    b_x: float
    a_y: float
    b_y: float

    def X(self, u_r: Any) -> Any:
        return self.a_x * u_r + self.b_x

    def Y(self, u_r: Any) -> Any:
        return self.a_y * u_r + self.b_y


def hydro_shape(p: VesselParams) -> HydroCoeffs:
    den = p.det
    return HydroCoeffs(
        a_x=(p.m23**2 - p.m11 * p.m33) / den,
        b_x=(p.d33 * p.m23 - p.d23 * p.m33) / den,
        a_y=(p.m22 - p.m11) * p.m23 / den,
        b_y=-(p.d22 * p.m33 - p.d32 * p.m23) / den,
    )


def hydro_coeffs(p: VesselParams, u_r: Any) -> tuple[Any, Any, HydroCoeffs]:
    """Return ``(X(u_r), Y(u_r), shape)`` where shape holds the affine coefficients."""
    h = hydro_shape(p)
    return h.X(u_r), h.Y(u_r), h


def F_u(p: VesselParams, v_r: Any, r: Any) -> Any:
    return (p.m22 * v_r + p.m23 * r) * r / p.m11


def F_r(p: VesselParams, u_r: Any, v_r: Any, r: Any) -> Any:
    den = p.det
    cv = (p.m23 * p.d22 - p.m22 * (p.d32 + (p.m22 - p.m11) * u_r)) / den
    cr = (p.m23 * (p.d23 + p.m11 * u_r) - p.m22 * (p.d33 + p.m23 * u_r)) / den
    return cv * v_r + cr * r


def sway_accel(p: VesselParams, u_r: Any, v_r: Any, r: Any) -> Any:
    h = hydro_shape(p)
    return h.X(u_r) * r + h.Y(u_r) * v_r


def dynamics(
    p: VesselParams, env: Environment, s: VesselState, tau_u: Any, tau_r: Any
) -> VesselState:
    """Time derivative of the vessel state for the given surge/yaw inputs."""
    if all(isinstance(v, (int, float)) for v in (*s, tau_u, tau_r)):
        if not all(math.isfinite(v) for v in (*s, tau_u, tau_r)):
            raise ModelError(f"non-finite input to dynamics: state={s}, tau=({tau_u}, {tau_r})")
    cpsi, spsi = dm.cos(s.psi), dm.sin(s.psi)
    return VesselState(
        x=s.u_r * cpsi - s.v_r * spsi + env.Vx,
        y=s.u_r * spsi + s.v_r * cpsi + env.Vy,
        psi=s.r,
        u_r=F_u(p, s.v_r, s.r) - p.d11 / p.m11 * s.u_r + tau_u,
        v_r=sway_accel(p, s.u_r, s.v_r, s.r),
        r=F_r(p, s.u_r, s.v_r, s.r) + tau_r,
    )


def speed_interval_bounds(p: VesselParams, Vmax: float, u_rd: float) -> tuple[float, float]:
    """``(X_max, Y_min)`` over ``u_r in [-Vmax, u_rd]``; X and Y are affine so endpoints suffice."""
    h = hydro_shape(p)
    ends = (-Vmax, u_rd)
    X_max = max(abs(h.X(u)) for u in ends)
    Y_min = min(abs(h.Y(u)) for u in ends)
    return X_max, Y_min


def sway_damped(p: VesselParams, Vmax: float, u_rd: float) -> bool:
    """True when Y(u_r) < 0 on the whole interval ``[-Vmax, u_rd]``."""
    h = hydro_shape(p)
    return h.Y(-Vmax) < 0.0 and h.Y(u_rd) < 0.0


_PARAM_KEYS = tuple(f.name for f in fields(VesselParams))


def vessel_from_mapping(data: dict[str, Any]) -> VesselParams:
    missing = [k for k in _PARAM_KEYS if k not in data]
    extra = [k for k in data if k not in _PARAM_KEYS and k != "name"]
    if missing:
        raise ModelError(f"vessel parameters missing: {', '.join(missing)}")
    if extra:
        raise ModelError(f"unknown vessel keys: {', '.join(extra)}")
    return VesselParams(**{k: float(data[k]) for k in _PARAM_KEYS})


def load_vessel(source: str | Path) -> VesselParams:
    """Load a vessel file by path, or a bundled vessel by bare name (e.g. ``"synthetic"``)."""
    path = Path(source)
    if path.suffix != ".toml" and not path.exists():
        text = resources.files("helm_sim.data").joinpath(f"vessels/{source}.toml").read_text()
    else:
        text = path.read_text()
    data = tomllib.loads(text)
    data = data.get("vessel", data)
    return vessel_from_mapping(data)
