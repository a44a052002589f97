"""Arc-length parametrised planar paths and the path-tangential frame.

Every path is unit speed in its parameter ``theta`` so that the frame update
law needs no speed factor.  Evaluators accept floats, duals and JAX arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np
from scipy import optimize, special

from . import dual as dm


class PathError(ValueError):
    pass


class OutsideTubeError(PathError):
    pass


class ParametrisationSingularity(PathError):
    """Raised when ``1 - kappa * y_bp`` drops below the configured floor."""


class FrameError(NamedTuple):
    x_bp: Any
    y_bp: Any
    theta: Any


class Path:
    kind: str = ""
    kappa_max: float = 0.0
    #: parameter interval searched when projecting a point; None means unbounded
    domain: tuple[float, float] | None = None

    def position(self, theta: Any) -> tuple[Any, Any]:
        raise NotImplementedError

    def tangent_angle(self, theta: Any) -> Any:
        raise NotImplementedError

    def curvature(self, theta: Any) -> Any:
        raise NotImplementedError

    def to_spec(self) -> dict[str, Any]:
        raise NotImplementedError

    def project(self, pos: tuple[float, float]) -> float:
        return _project_numeric(self, pos)

    def sample(self, n: int = 1000) -> np.ndarray:
        lo, hi = self.domain if self.domain else (0.0, 1000.0)
        th = np.linspace(lo, hi, n)
        x, y = self.position(th)
        return np.column_stack([x, y])


@dataclass(frozen=True)
class Line(Path):
    origin: tuple[float, float] = (0.0, 0.0)
    heading: float = 0.0

    kind = "line"
    kappa_max = 0.0
    domain = None

    def position(self, theta):
        return (
            self.origin[0] + theta * dm.cos(self.heading),
            self.origin[1] + theta * dm.sin(self.heading),
        )

    def tangent_angle(self, theta):
        return theta * 0.0 + self.heading

    def curvature(self, theta):
        return theta * 0.0

    def project(self, pos):
        dx, dy = pos[0] - self.origin[0], pos[1] - self.origin[1]
        return dx * math.cos(self.heading) + dy * math.sin(self.heading)

    def sample(self, n=2):
        return super().sample(n)

    def to_spec(self):
        return {"kind": "line", "origin": list(self.origin), "heading": self.heading}


@dataclass(frozen=True)
class Circle(Path):
    """Circle traversed counter-clockwise (``direction=1``) or clockwise (``-1``).

    ``theta = 0`` sits at polar angle ``start_angle`` about the centre.
    """

    radius: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    direction: int = 1
    start_angle: float = 0.0

    kind = "circle"

    def __post_init__(self):
        if not self.radius > 0.0:
            raise PathError("circle radius must be positive")
        if self.direction not in (1, -1):
            raise PathError("circle direction must be 1 or -1")

    @property
    def kappa_max(self) -> float:
        return 1.0 / self.radius

    @property
    def domain(self):
        return (0.0, 2.0 * math.pi * self.radius)

    def _polar(self, theta):
        return self.start_angle + self.direction * theta / self.radius

    def position(self, theta):
        a = self._polar(theta)
        return (
            self.center[0] + self.radius * dm.cos(a),
            self.center[1] + self.radius * dm.sin(a),
        )

    def tangent_angle(self, theta):
        return self._polar(theta) + self.direction * 0.5 * math.pi

    def curvature(self, theta):
        return theta * 0.0 + self.direction / self.radius

    def project(self, pos):
        dx, dy = pos[0] - self.center[0], pos[1] - self.center[1]
        dist = math.hypot(dx, dy)
        if dist == 0.0 or abs(dist - self.radius) >= self.radius:
            raise OutsideTubeError(
                f"point {tuple(pos)} is outside the tube of radius {self.radius} about the circle"
            )
        rel = math.atan2(dy, dx) - self.start_angle
        rel = self.direction * rel
        rel = rel % (2.0 * math.pi)
        return rel * self.radius

    def to_spec(self):
        return {
            "kind": "circle",
            "radius": self.radius,
            "center": list(self.center),
            "direction": self.direction,
            "start_angle": self.start_angle,
        }


class SinePath(Path):
    """The curve ``y = A sin(w x)`` along the inertial x-axis, in arc length.

    Arc length uses the exact incomplete elliptic integral; ``x(s)`` over one
    period is tabulated on a uniform arc-length grid and interpolated with
    cubic Hermite segments using the exact slope ``dx/ds``.
    """

    kind = "sine"

    def __init__(self, amplitude: float, wavenumber: float, length: float, nodes: int = 4096):
        if not (wavenumber > 0.0 and length > 0.0):
            raise PathError("sine wavenumber and length must be positive")
        self.amplitude = float(amplitude)
        self.wavenumber = float(wavenumber)
        self.length = float(length)
        self._k = self.amplitude * self.wavenumber
        self.kappa_max = abs(self.amplitude) * self.wavenumber**2
        self.domain = (0.0, self.length)

        self.period_x = 2.0 * math.pi / self.wavenumber
        self.period_s = float(self.arc_length(self.period_x))
        s_nodes = np.linspace(0.0, self.period_s, nodes + 1)
        x_nodes = s_nodes.copy()
        for _ in range(30):
            step = (self.arc_length(x_nodes) - s_nodes) * self._dxds(x_nodes)
            x_nodes = x_nodes - step
            if np.max(np.abs(step)) < 1e-13 * self.period_x:
                break
        self._hs = s_nodes[1]
        self._x_nodes = x_nodes
        self._m_nodes = self._dxds(x_nodes)

    def __eq__(self, other):
        return isinstance(other, SinePath) and self.to_spec() == other.to_spec()

    __hash__ = None

    def __repr__(self):
        return f"SinePath(amplitude={self.amplitude}, wavenumber={self.wavenumber}, length={self.length})"

    def _dxds(self, x):
        c = self._k * np.cos(self.wavenumber * x)
        return 1.0 / np.sqrt(1.0 + c * c)

    def arc_length(self, x):
        """Exact arc length from 0 to ``x``."""
        k2 = self._k**2
        m = k2 / (1.0 + k2)
        phi = self.wavenumber * np.asarray(x, dtype=float)
        return math.sqrt(1.0 + k2) / self.wavenumber * special.ellipeinc(phi, m)

    def x_of_s(self, s: Any) -> Any:
        sv = dm.value_of(s)
        xp = dm._xp(sv)
        n_per = xp.floor(sv / self.period_s)
        s_loc = s - n_per * self.period_s
        idx = xp.clip(xp.floor(dm.value_of(s_loc) / self._hs), 0, len(self._x_nodes) - 2)
        idx = idx.astype(int) if xp is np else idx.astype("int32")
        xn = xp.asarray(self._x_nodes)
        mn = xp.asarray(self._m_nodes)
        x0, x1 = xn[idx], xn[idx + 1]
        m0, m1 = mn[idx] * self._hs, mn[idx + 1] * self._hs
        t = (s_loc - idx * self._hs) / self._hs
        t2 = t * t
        t3 = t2 * t
        h00 = 2.0 * t3 - 3.0 * t2 + 1.0
        h10 = t3 - 2.0 * t2 + t
        h01 = -2.0 * t3 + 3.0 * t2
        h11 = t3 - t2
        return h00 * x0 + h10 * m0 + h01 * x1 + h11 * m1 + n_per * self.period_x

    def position(self, theta):
        x = self.x_of_s(theta)
        return x, self.amplitude * dm.sin(self.wavenumber * x)

    def tangent_angle(self, theta):
        x = self.x_of_s(theta)
        return dm.atan(self._k * dm.cos(self.wavenumber * x))

    def curvature(self, theta):
        x = self.x_of_s(theta)
        c = self._k * dm.cos(self.wavenumber * x)
        q = 1.0 + c * c
        return -self._k * self.wavenumber * dm.sin(self.wavenumber * x) / (q * dm.sqrt(q))

    def to_spec(self):
        return {
            "kind": "sine",
            "amplitude": self.amplitude,
            "wavenumber": self.wavenumber,
            "length": self.length,
        }


_PATH_KEYS = {
    "circle": ({"radius"}, {"center", "direction", "start_angle"}),
    "line": (set(), {"origin", "heading"}),
    "sine": ({"amplitude", "wavenumber", "length"}, set()),
}


def path_from_spec(spec: dict[str, Any]) -> Path:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in _PATH_KEYS:
        raise PathError(f"unknown path kind {kind!r}")
    required, optional = _PATH_KEYS[kind]
    if missing := required - spec.keys():
        raise PathError(f"{kind} path is missing {', '.join(sorted(missing))}")
    if extra := spec.keys() - required - optional:
        raise PathError(f"unknown {kind} path keys: {', '.join(sorted(extra))}")
    if kind == "circle":
        return Circle(
            radius=float(spec["radius"]),
            center=tuple(float(c) for c in spec.get("center", (0.0, 0.0))),
            direction=int(spec.get("direction", 1)),
            start_angle=float(spec.get("start_angle", 0.0)),
        )
    if kind == "line":
        return Line(
            origin=tuple(float(c) for c in spec.get("origin", (0.0, 0.0))),
            heading=float(spec.get("heading", 0.0)),
        )
    return SinePath(float(spec["amplitude"]), float(spec["wavenumber"]), float(spec["length"]))


def frame_error(path: Path, theta: Any, pos: tuple[Any, Any]) -> FrameError:
    """Vessel position expressed in the path-tangential frame at ``theta``."""
    xp_, yp_ = path.position(theta)
    g = path.tangent_angle(theta)
    dx, dy = pos[0] - xp_, pos[1] - yp_
    cg, sg = dm.cos(g), dm.sin(g)
    return FrameError(x_bp=cg * dx + sg * dy, y_bp=-sg * dx + cg * dy, theta=theta)


def tube_radius(path: Path) -> float:
    return math.inf if path.kappa_max == 0.0 else 1.0 / path.kappa_max


def project_initial_theta(path: Path, pos: tuple[float, float]) -> float:
    """Path parameter of the closest path point; the vessel then lies on its normal."""
    return path.project(pos)


def _project_numeric(path: Path, pos: tuple[float, float], samples: int = 20001) -> float:
    lo, hi = path.domain
    th = np.linspace(lo, hi, samples)
    px, py = path.position(th)
    d = np.hypot(px - pos[0], py - pos[1])
    i = int(np.argmin(d))
    tube = tube_radius(path)
    if not d[i] < tube:
        raise OutsideTubeError(f"point {tuple(pos)} is {d[i]:.3f} m from the path; tube is {tube:.3f} m")
    a, b = th[max(i - 1, 0)], th[min(i + 1, samples - 1)]

    def along(t):
        return float(frame_error(path, t, pos).x_bp)

    fa, fb = along(a), along(b)
    if fa == 0.0:
        return float(a)
    if fb == 0.0 or fa * fb > 0.0:
        res = optimize.minimize_scalar(
            lambda t: float(np.hypot(*(np.subtract(path.position(t), pos)))),
            bounds=(a, b),
            method="bounded",
            options={"xatol": 1e-12},
        )
        return float(res.x)
    return float(optimize.brentq(along, a, b, xtol=1e-13, rtol=4 * np.finfo(float).eps))


def theta_rate(path: Path, fe: FrameError, u_t: Any, chi: Any, VT_hat: Any, k_delta: float) -> Any:
    """Frame update law: progress the frame with the estimated tangential current."""
    kappa = path.curvature(fe.theta)
    gamma = path.tangent_angle(fe.theta)
    num = u_t * dm.cos(chi - gamma) + VT_hat + k_delta * fe.x_bp
    return num / (1.0 - kappa * fe.y_bp)


def theta_dot(
    path: Path,
    fe: FrameError,
    u_t: float,
    chi: float,
    VT_hat: float,
    k_delta: float,
    sigma_floor: float = 1e-6,
) -> float:
    margin = 1.0 - float(path.curvature(fe.theta)) * float(fe.y_bp)
    if margin < sigma_floor:
        raise ParametrisationSingularity(
            f"1 - kappa*y_bp = {margin:.6g} < {sigma_floor:.6g} at theta={float(fe.theta):.6g}, "
            f"y_bp={float(fe.y_bp):.6g}"
        )
    return theta_rate(path, fe, u_t, chi, VT_hat, k_delta)
