"""Scenario configuration: TOML parsing, validation, normalisation and serialisation.

A scenario file has a few top-level keys and one table per concern::

    name = "case-study"
    force = false

    [vessel]        # file = "synthetic" (bundled name or path) or the nine m_ij/d_ij keys
    [environment]   # Vx, Vy, Vmax (optional, defaults to the current speed)
    [path]          # kind = "circle" | "line" | "sine" plus its keys
    [guidance]      # Delta, k_delta
    [control]       # k_u, k1, k2
    [observer]      # kx1, ky1, kx2, ky2, equal_integral_gains, noise_std, noise_seed
    [reference]     # u_rd = 5.0, or table = [[t0, u0], [t1, u1], ...]
    [initial]       # u_r, v_r, r, x, y, psi
    [sim]           # dt, t_end, log_every, integrator
    [monitor]       # sigma_floor, c_min

Unknown keys are rejected.  :func:`dumps` writes the normalised form (vessel
inline, every default spelled out), which parses back to an equal config.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path as FilePath
from typing import Any, NamedTuple

import tomli_w

from .control import ControlGains
from .guidance import GuidanceGains
from .model import Environment, ModelError, VesselParams, load_vessel, vessel_from_mapping
from .observer import ObserverGains
from .path import Path, PathError, path_from_spec
from .sim import SpeedProfile

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid scenario file; the message names the offending location."""


class InitialState(NamedTuple):
    u_r: float = 0.0
    v_r: float = 0.0
    r: float = 0.0
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    vessel: VesselParams
    environment: Environment
    path: Path
    guidance: GuidanceGains = GuidanceGains()
    control: ControlGains = ControlGains()
    observer: ObserverGains = ObserverGains()
    reference: SpeedProfile = SpeedProfile()
    initial: InitialState = InitialState()
    dt: float = 0.01
    t_end: float = 1000.0
    log_every: int = 10
    integrator: str = "etdrk4"
    #: None means "use sigma from the tuning procedure"
    sigma_floor: float | None = None
    c_min: float = 0.05
    noise_std: float = 0.0
    noise_seed: int = 0
    force: bool = False
    name: str = "scenario"

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


_TOP = {"name", "force", "vessel", "environment", "path", "guidance", "control", "observer",
        "reference", "initial", "sim", "monitor"}  # fmt: skip
_SECTIONS = {
    "environment": {"Vx", "Vy", "Vmax"},
    "guidance": {"Delta", "k_delta"},
    "control": {"k_u", "k1", "k2"},
    "observer": {"kx1", "ky1", "kx2", "ky2", "equal_integral_gains", "noise_std", "noise_seed"},
    "reference": {"u_rd", "table"},
    "initial": set(InitialState._fields),
    "sim": {"dt", "t_end", "log_every", "integrator"},
    "monitor": {"sigma_floor", "c_min"},
}
_INTEGRATORS = ("etdrk4", "rk4")


def _section(data: dict, name: str) -> dict:
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    allowed = _SECTIONS.get(name)
    if allowed is not None:
        extra = sorted(set(sec) - allowed)
        if extra:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(extra)}")
    return sec


def _num(sec: dict, where: str, key: str, default: Any = None) -> float:
    v = sec.get(key, default)
    if v is None:
        raise ConfigError(f"{where}.{key} is required")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{where}.{key} must be finite")
    return float(v)


def _int(sec: dict, where: str, key: str, default: int) -> int:
    v = sec.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {v!r}")
    return v


def _bool(sec: dict, where: str, key: str, default: bool) -> bool:
    v = sec.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{where}.{key} must be true or false, got {v!r}")
    return v


def _vessel(sec: Any, base_dir: FilePath | None) -> VesselParams:
    if not isinstance(sec, dict):
        raise ConfigError("[vessel] must be a table")
    if "file" in sec:
        if len(sec) != 1:
            raise ConfigError("[vessel] takes either 'file' or inline parameters, not both")
        src = str(sec["file"])
        candidate = FilePath(src)
        if base_dir is not None and not candidate.is_absolute() and (base_dir / candidate).exists():
            candidate = base_dir / candidate
        try:
            return load_vessel(candidate if candidate.exists() else src)
        except (OSError, FileNotFoundError) as exc:
            raise ConfigError(f"vessel.file: cannot load {src!r}: {exc}") from exc
    return vessel_from_mapping(sec)


def _reference(sec: dict) -> SpeedProfile:
    if ("u_rd" in sec) == ("table" in sec):
        raise ConfigError("[reference] needs exactly one of 'u_rd' or 'table'")
    if "u_rd" in sec:
        return SpeedProfile.constant(_num(sec, "reference", "u_rd"))
    table = sec["table"]
    try:
        rows = [(float(t), float(u)) for t, u in table]
    except (TypeError, ValueError) as exc:
        raise ConfigError("reference.table must be a list of [time, speed] pairs") from exc
    return SpeedProfile(tuple(r[0] for r in rows), tuple(r[1] for r in rows))


def from_dict(data: dict[str, Any], base_dir: FilePath | None = None) -> ScenarioConfig:
    """Build a validated config from parsed TOML data."""
    extra = sorted(set(data) - _TOP)
    if extra:
        raise ConfigError(f"unknown top-level key(s): {', '.join(extra)}")
    for req in ("vessel", "environment", "path"):
        if req not in data:
            raise ConfigError(f"missing required table [{req}]")
    try:
        vessel = _vessel(data["vessel"], base_dir)
        env_s = _section(data, "environment")
        vmax = env_s.get("Vmax")
        env = Environment(
            _num(env_s, "environment", "Vx", 0.0),
            _num(env_s, "environment", "Vy", 0.0),
            None if vmax is None else _num(env_s, "environment", "Vmax"),
        )
        if not isinstance(data["path"], dict):
            raise ConfigError("[path] must be a table")
        path = path_from_spec(data["path"])

        g = _section(data, "guidance")
        guidance = GuidanceGains(_num(g, "guidance", "Delta", 40.0), _num(g, "guidance", "k_delta", 1.0))
        c = _section(data, "control")
        control = ControlGains(
            _num(c, "control", "k_u", 0.1), _num(c, "control", "k1", 1000.0), _num(c, "control", "k2", 400.0)
        )
        o = _section(data, "observer")
        observer = ObserverGains(
            _num(o, "observer", "kx1", 1.0),
            _num(o, "observer", "ky1", 1.0),
            _num(o, "observer", "kx2", 0.1),
            _num(o, "observer", "ky2", 0.1),
            _bool(o, "observer", "equal_integral_gains", True),
        )
        reference = _reference(_section(data, "reference")) if "reference" in data else SpeedProfile()
        i = _section(data, "initial")
        initial = InitialState(*(_num(i, "initial", k, 0.0) for k in InitialState._fields))
        s = _section(data, "sim")
        m = _section(data, "monitor")
        sigma_floor = m.get("sigma_floor")
        cfg = ScenarioConfig(
            vessel=vessel,
            environment=env,
            path=path,
            guidance=guidance,
            control=control,
            observer=observer,
            reference=reference,
            initial=initial,
            dt=_num(s, "sim", "dt", 0.01),
            t_end=_num(s, "sim", "t_end", 1000.0),
            log_every=_int(s, "sim", "log_every", 10),
            integrator=str(s.get("integrator", "etdrk4")),
            sigma_floor=None if sigma_floor is None else _num(m, "monitor", "sigma_floor"),
            c_min=_num(m, "monitor", "c_min", 0.05),
            noise_std=_num(o, "observer", "noise_std", 0.0),
            noise_seed=_int(o, "observer", "noise_seed", 0),
            force=_bool(data, "", "force", False),
            name=str(data.get("name", "scenario")),
        )
    except (ModelError, PathError) as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    _validate(cfg)
    return cfg


def _validate(cfg: ScenarioConfig) -> None:
    if not (cfg.dt > 0.0 and cfg.t_end > 0.0):
        raise ConfigError("sim.dt and sim.t_end must be positive")
    if cfg.t_end < cfg.dt:
        raise ConfigError("sim.t_end must be at least one step")
    if cfg.log_every < 1:
        raise ConfigError("sim.log_every must be >= 1")
    if cfg.integrator not in _INTEGRATORS:
        raise ConfigError(f"sim.integrator must be one of {', '.join(_INTEGRATORS)}")
    if not cfg.c_min > 0.0:
        raise ConfigError("monitor.c_min must be positive")
    if cfg.sigma_floor is not None and not 0.0 < cfg.sigma_floor < 1.0:
        raise ConfigError("monitor.sigma_floor must lie in (0, 1)")
    if cfg.noise_std < 0.0:
        raise ConfigError("observer.noise_std must be non-negative")


def loads(text: str, base_dir: FilePath | None = None) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        if line is None:
            raise ConfigError(f"parse error: {exc}") from exc
        msg = getattr(exc, "msg", str(exc))
        raise ConfigError(f"parse error at line {line}, column {col}: {msg}") from exc
    return from_dict(data, base_dir)


def bundled_scenario(name: str) -> FilePath | None:
    """Path of a scenario shipped with the package (e.g. ``"case_study"``), if any."""
    res = resources.files("helm_sim.data").joinpath(f"{name}.toml")
    return FilePath(str(res)) if res.is_file() else None


def load(path: str | FilePath) -> ScenarioConfig:
    """Load a scenario file; a bare name such as ``case_study`` selects a bundled one."""
    p = FilePath(path)
    if not p.exists() and p.suffix == "" and bundled_scenario(str(path)) is not None:
        p = bundled_scenario(str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    try:
        return loads(text, p.parent)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from exc


def to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    """Normalised mapping: all defaults explicit, vessel inline."""
    env = cfg.environment
    o = cfg.observer
    ref: dict[str, Any]
    if cfg.reference.is_constant:
        ref = {"u_rd": cfg.reference.speeds[0]}
    else:
        ref = {"table": [[t, u] for t, u in zip(cfg.reference.times, cfg.reference.speeds)]}
    monitor: dict[str, Any] = {"c_min": cfg.c_min}
    if cfg.sigma_floor is not None:
        monitor["sigma_floor"] = cfg.sigma_floor
    return {
        "name": cfg.name,
        "force": cfg.force,
        "vessel": cfg.vessel.to_dict(),
        "environment": {"Vx": env.Vx, "Vy": env.Vy, "Vmax": env.Vmax},
        "path": cfg.path.to_spec(),
        "guidance": {"Delta": cfg.guidance.Delta, "k_delta": cfg.guidance.k_delta},
        "control": {"k_u": cfg.control.k_u, "k1": cfg.control.k1, "k2": cfg.control.k2},
        "observer": {
            "kx1": o.kx1,
            "ky1": o.ky1,
            "kx2": o.kx2,
            "ky2": o.ky2,
            "equal_integral_gains": o.equal_integral_gains,
            "noise_std": cfg.noise_std,
            "noise_seed": cfg.noise_seed,
        },
        "reference": ref,
        "initial": cfg.initial._asdict(),
        "sim": {"dt": cfg.dt, "t_end": cfg.t_end, "log_every": cfg.log_every, "integrator": cfg.integrator},
        "monitor": monitor,
    }


def dumps(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def normalize(cfg: ScenarioConfig) -> ScenarioConfig:
    """Round-trip through the normalised mapping."""
    return from_dict(to_dict(cfg))
