"""Standing assumptions, the two curvature conditions (``lemma2``, ``lemma3``) and the tube tuning procedure.

The tuning follows three steps: the absolute curvature bound ``Y_min/X_max``;
the margin ``sigma`` taken at the boundary of the look-ahead condition
``Delta > 4 X_max / (Y_min - X_max kappa_max / sigma)``; and the conservative
tube radius ``(1 - sigma)/kappa_max``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

from .model import Environment, VesselParams, hydro_shape, speed_interval_bounds
from .path import Path


@dataclass(frozen=True)
class Verdict:
    passed: bool
    #: positive when the condition holds with room to spare
    margin: float
    detail: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    current_bound: Verdict
    sway_damped: Verdict
    propulsion: Verdict

    @property
    def passed(self) -> bool:
        return self.current_bound.passed and self.sway_damped.passed and self.propulsion.passed


def check_assumptions(env: Environment, u_rd: float | Sequence[float], vessel: VesselParams) -> AssumptionReport:
    """Check the current bound, sway damping on ``[-Vmax, max u_rd]`` and ``2 Vmax < min u_rd``."""
    speeds = [float(u_rd)] if isinstance(u_rd, (int, float)) else [float(u) for u in u_rd]
    u_lo, u_hi = min(speeds), max(speeds)
    Vmax = float(env.Vmax)

    a1 = Verdict(env.speed <= Vmax, Vmax - env.speed, f"|V| = {env.speed:.6g}, Vmax = {Vmax:.6g}")

    h = hydro_shape(vessel)
    y_worst = max(h.Y(-Vmax), h.Y(u_hi))
    a2 = Verdict(y_worst < 0.0, -y_worst, f"max Y on [{-Vmax:.4g}, {u_hi:.4g}] = {y_worst:.6g}")

    a3 = Verdict(2.0 * Vmax < u_lo, u_lo - 2.0 * Vmax, f"2 Vmax = {2 * Vmax:.6g}, min u_rd = {u_lo:.6g}")
    return AssumptionReport(a1, a2, a3)


@dataclass(frozen=True)
class FeasibilityReport:
    V_max: float
    u_rd_min: float
    u_rd_max: float
    X_max: float
    Y_min: float
    kappa_max: float
    Delta: float
    lemma2_bound: float
    sigma: float
    #: smallest look-ahead distance for which any tube exists (the bound evaluated at sigma = 1)
    delta_bound: float
    tube_radius_param: float
    tube_radius_sigma: float
    assumptions: AssumptionReport
    lemma2: Verdict
    lemma3: Verdict
    initial_in_tube: Verdict | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        ok = self.assumptions.passed and self.lemma2.passed and self.lemma3.passed
        if self.initial_in_tube is not None:
            ok = ok and self.initial_in_tube.passed
        return ok

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["passed"] = self.passed
        d["notes"] = list(self.notes)
        return _json_safe(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        def line(name: str, v: Verdict | None) -> str:
            if v is None:
                return f"  {name:<22} n/a"
            return f"  {name:<22} {'PASS' if v.passed else 'FAIL'}  (margin {v.margin:.6g}) {v.detail}"

        rows = [
            "feasibility report",
            f"  V_max                  {self.V_max:.6g} m/s",
            f"  u_rd range             [{self.u_rd_min:.6g}, {self.u_rd_max:.6g}] m/s",
            f"  X_max, Y_min           {self.X_max:.6g}, {self.Y_min:.6g}",
            f"  kappa_max              {self.kappa_max:.6g} 1/m",
            f"  lemma2_bound           {self.lemma2_bound:.6g} 1/m",
            f"  Delta                  {self.Delta:.6g} m (needs > {self.delta_bound:.6g})",
            f"  sigma                  {self.sigma:.6g}",
            f"  tube (1/kappa)         {self.tube_radius_param:.6g} m",
            f"  tube ((1-sigma)/kappa) {self.tube_radius_sigma:.6g} m",
            line("assumption 1 (current)", self.assumptions.current_bound),
            line("assumption 2 (sway)", self.assumptions.sway_damped),
            line("assumption 3 (speed)", self.assumptions.propulsion),
            line("lemma 2", self.lemma2),
            line("lemma 3", self.lemma3),
            line("initial state in tube", self.initial_in_tube),
            f"  overall                {'PASS' if self.passed else 'FAIL'}",
        ]
        rows += [f"  note: {n}" for n in self.notes]
        return "\n".join(rows)


def _json_safe(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def sigma_from_delta(X_max: float, Y_min: float, kappa_max: float, Delta: float) -> float:
    """Smallest admissible sigma for a given Delta; ``inf`` when Delta is too small."""
    den = Y_min - 4.0 * X_max / Delta
    if den <= 0.0:
        return math.inf
    return X_max * kappa_max / den


def tune(
    path: Path,
    vessel: VesselParams,
    env: Environment,
    u_rd: float | Sequence[float],
    Delta: float,
    initial_y_bp: float | None = None,
) -> FeasibilityReport:
    speeds = [float(u_rd)] if isinstance(u_rd, (int, float)) else [float(u) for u in u_rd]
    Vmax = float(env.Vmax)
    X_max, Y_min = speed_interval_bounds(vessel, Vmax, max(speeds))
    kappa = float(path.kappa_max)
    notes = []

    ratio = Y_min / X_max if X_max > 0.0 else math.inf
    lemma2 = Verdict(kappa < ratio, ratio - kappa, f"kappa_max < Y_min/X_max = {ratio:.6g}")

    sigma = sigma_from_delta(X_max, Y_min, kappa, Delta)
    den1 = Y_min - X_max * kappa
    delta_bound = 4.0 * X_max / den1 if den1 > 0.0 else math.inf
    if not math.isfinite(sigma):
        notes.append(f"Delta too small: Y_min - 4 X_max/Delta <= 0 (Delta = {Delta:.6g})")
    # At the boundary sigma both lemma-3 inequalities hold for any sigma' slightly
    # larger, so the lemma is satisfiable exactly when that sigma is below one.
    lemma3_ok = math.isfinite(sigma) and sigma < 1.0 and lemma2.passed
    lemma3 = Verdict(lemma3_ok, 1.0 - sigma, f"sigma = {sigma:.6g} must be < 1")

    if kappa == 0.0:
        tube_p = tube_s = math.inf
    else:
        tube_p = 1.0 / kappa
        tube_s = (1.0 - sigma) / kappa if lemma3_ok else 0.0

    init = None
    if initial_y_bp is not None:
        init = Verdict(
            abs(initial_y_bp) < tube_s,
            tube_s - abs(initial_y_bp),
            f"|y_bp(0)| = {abs(initial_y_bp):.6g} m",
        )

    return FeasibilityReport(
        V_max=Vmax,
        u_rd_min=min(speeds),
        u_rd_max=max(speeds),
        X_max=X_max,
        Y_min=Y_min,
        kappa_max=kappa,
        Delta=float(Delta),
        lemma2_bound=ratio,
        sigma=sigma,
        delta_bound=delta_bound,
        tube_radius_param=tube_p,
        tube_radius_sigma=tube_s,
        assumptions=check_assumptions(env, speeds, vessel),
        lemma2=lemma2,
        lemma3=lemma3,
        initial_in_tube=init,
        notes=tuple(notes),
    )
