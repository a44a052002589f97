"""Static SVG figures for a finished run.

Figures are built on :class:`matplotlib.figure.Figure` directly rather than
through pyplot, so sweep workers can render from several threads.
"""

from __future__ import annotations

from pathlib import Path as FilePath

import numpy as np
from matplotlib.figure import Figure

from .model import Environment
from .path import Path
from .sim import TimeSeries

FIGURES = ("trajectory", "errors", "estimates", "velocities", "cr")


def _save(fig: Figure, out: FilePath) -> FilePath:
    fig.tight_layout()
    # a fixed (empty) date keeps repeated runs byte-identical
    fig.savefig(out, format="svg", metadata={"Date": None})
    return out


def _path_samples(path: Path, ts: TimeSeries) -> np.ndarray:
    if path.domain is not None:
        lo, hi = path.domain
    else:
        th = ts["theta"]
        lo, hi = float(np.min(th)) - 50.0, float(np.max(th)) + 50.0
    theta = np.linspace(lo, hi, 2000)
    x, y = path.position(theta)
    return np.column_stack([np.broadcast_to(x, theta.shape), np.broadcast_to(y, theta.shape)])


def trajectory(ts: TimeSeries, path: Path, out: FilePath) -> FilePath:
    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot()
    p = _path_samples(path, ts)
    ax.plot(p[:, 0], p[:, 1], "k--", lw=1, label="path")
    ax.plot(ts["x"], ts["y"], "b-", lw=1.2, label="vessel")
    ax.plot(ts["x"][:1], ts["y"][:1], "go", ms=5, label="start")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best")
    return _save(fig, out)


def errors(ts: TimeSeries, out: FilePath) -> FilePath:
    fig = Figure(figsize=(7, 7))
    axes = fig.subplots(3, 1, sharex=True)
    for ax, key, label in zip(
        axes, ("y_bp", "x_bp", "psi_tilde"), ("cross-track y_bp [m]", "along-track x_bp [m]", "heading error [rad]")
    ):
        ax.plot(ts.t, ts[key], lw=1)
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("t [s]")
    return _save(fig, out)


def estimates(ts: TimeSeries, env: Environment, out: FilePath) -> FilePath:
    fig = Figure(figsize=(7, 6))
    ax1, ax2 = fig.subplots(2, 1, sharex=True)
    ax1.plot(ts.t, ts["Vx_hat"], label="Vx estimate")
    ax1.plot(ts.t, ts["Vy_hat"], label="Vy estimate")
    ax1.axhline(env.Vx, color="C0", ls=":", lw=1, label="Vx")
    ax1.axhline(env.Vy, color="C1", ls=":", lw=1, label="Vy")
    ax1.set_ylabel("inertial current [m/s]")
    ax1.legend(loc="best")
    ax2.plot(ts.t, ts["VT_hat"], label="tangential")
    ax2.plot(ts.t, ts["VN_hat"], label="normal")
    ax2.set_ylabel("path-frame estimate [m/s]")
    ax2.set_xlabel("t [s]")
    ax2.legend(loc="best")
    for ax in (ax1, ax2):
        ax.grid(True, alpha=0.3)
    return _save(fig, out)


def velocities(ts: TimeSeries, out: FilePath) -> FilePath:
    fig = Figure(figsize=(7, 7))
    axes = fig.subplots(3, 1, sharex=True)
    axes[0].plot(ts.t, ts["u_r"], label="u_r")
    if "u_rd" in ts.extra:
        axes[0].plot(ts.t, ts["u_rd"], "k--", lw=1, label="u_rd")
    axes[0].legend(loc="best")
    axes[0].set_ylabel("surge [m/s]")
    axes[1].plot(ts.t, ts["v_r"])
    axes[1].set_ylabel("sway [m/s]")
    axes[2].plot(ts.t, ts["r"], label="r")
    axes[2].plot(ts.t, ts["r_d"], "k--", lw=1, label="r_d")
    axes[2].set_ylabel("yaw rate [rad/s]")
    axes[2].legend(loc="best")
    axes[-1].set_xlabel("t [s]")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    return _save(fig, out)


def cr(ts: TimeSeries, c_min: float, out: FilePath) -> FilePath:
    fig = Figure(figsize=(7, 3.5))
    ax = fig.add_subplot()
    ax.plot(ts.t, ts["C_r"], lw=1, label="C_r")
    ax.axhline(c_min, color="r", ls=":", lw=1, label="c_min")
    ax.axhline(-c_min, color="r", ls=":", lw=1)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("C_r")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best")
    return _save(fig, out)


def write_all(ts: TimeSeries, path: Path, env: Environment, c_min: float, out_dir: FilePath) -> list[FilePath]:
    out_dir = FilePath(out_dir)
    return [
        trajectory(ts, path, out_dir / "trajectory.svg"),
        errors(ts, out_dir / "errors.svg"),
        estimates(ts, env, out_dir / "estimates.svg"),
        velocities(ts, out_dir / "velocities.svg"),
        cr(ts, c_min, out_dir / "cr.svg"),
    ]
