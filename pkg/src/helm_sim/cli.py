"""``helm-sim`` command line: check, run and sweep scenario files.

Exit codes: 0 clean, 1 usage or parse error, 2 refused by the feasibility
checks, 3 runtime fault (or, for ``sweep``, any cell that was not clean).
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path as FilePath
from typing import Any, Sequence

import numpy as np

from . import config as cfgmod
from .config import ConfigError, ScenarioConfig

EXIT_OK, EXIT_PARSE, EXIT_REFUSED, EXIT_FAULT = 0, 1, 2, 3

SUMMARY_COLUMNS = (
    "cell", "clean", "exit_code", "settling_time", "v_r_max", "Cr_min", "condition1_margin_min",
    "tube_radius", "faults",
)  # fmt: skip


def _apply_overrides(cfg: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    changes: dict[str, Any] = {}
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.t_end is not None:
        changes["t_end"] = args.t_end
    if args.force:
        changes["force"] = True
    if changes:
        cfg = cfg.replace(**changes)
        cfgmod._validate(cfg)
    return cfg


def _load(args: argparse.Namespace) -> ScenarioConfig:
    return _apply_overrides(cfgmod.load(args.config), args)


def cmd_check(args: argparse.Namespace) -> int:
    from .sim import feasibility_report

    cfg = _load(args)
    report = feasibility_report(cfg)
    print(report.to_text())
    if args.out:
        out = FilePath(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "feasibility.json").write_text(report.to_json() + "\n")
    return EXIT_OK if report.passed else EXIT_REFUSED


def run_one(cfg: ScenarioConfig, out: FilePath | None, plots: bool = True) -> tuple[int, dict[str, Any]]:
    """Run a scenario and write its artifacts; returns ``(exit_code, summary)``."""
    from .sim import AdmissionError, run_scenario

    summary: dict[str, Any] = {}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    try:
        ts, mon = run_scenario(cfg)
    except AdmissionError as exc:
        summary["refused"] = exc.report.to_dict()
        if out is not None:
            (out / "feasibility.json").write_text(exc.report.to_json() + "\n")
        return EXIT_REFUSED, summary
    code = EXIT_OK if mon.clean else EXIT_FAULT
    summary.update(mon.to_dict())
    summary["settling_time"] = settling_time(ts.t, ts["y_bp"], 1.0)
    if out is not None:
        ts.to_csv(out / "timeseries.csv")
        (out / "monitor.json").write_text(mon.to_json() + "\n")
        if plots:
            from .plots import write_all

            write_all(ts, cfg.path, cfg.environment, cfg.c_min, out)
    return code, summary


def settling_time(t: np.ndarray, y: np.ndarray, tol: float) -> float:
    """First time after which ``|y| < tol`` holds to the end; NaN if it never settles."""
    outside = np.nonzero(~(np.abs(y) < tol))[0]
    if len(outside) == 0:
        return float(t[0])
    last = int(outside[-1])
    return float(t[last + 1]) if last + 1 < len(t) else math.nan


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = FilePath(args.out)
    try:
        code, summary = run_one(cfg, out, plots=not args.no_plots)
    except Exception as exc:  # a crash inside the integrator is a runtime fault
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    if code == EXIT_REFUSED:
        print("refused: feasibility checks failed (use --force to run anyway)", file=sys.stderr)
        from .sim import feasibility_report

        print(feasibility_report(cfg).to_text())
        return code
    status = "clean" if code == EXIT_OK else "FAULT"
    print(
        f"{status}: t_final={summary['t_final']:.6g} s, min margin={summary['condition1_margin_min']:.6g}, "
        f"min |C_r|={summary['Cr_min']:.6g}, v_r_max={summary['v_r_max']:.6g}; artifacts in {out}"
    )
    for f in summary.get("faults", []):
        print(f"  fault at t={f['t']:.6g}: {f['kind']}: {f['message']}", file=sys.stderr)
    return code


# sweeps


def parse_axis(text: str) -> tuple[str, list[float]]:
    """``name=v1,v2,...`` or ``name=start:stop:count`` (inclusive linspace)."""
    if "=" not in text:
        raise ConfigError(f"bad sweep axis {text!r}: expected name=values")
    name, spec = (s.strip() for s in text.split("=", 1))
    try:
        if ":" in spec:
            lo, hi, n = spec.split(":")
            values = [float(v) for v in np.linspace(float(lo), float(hi), int(n))]
        else:
            values = [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad sweep values for {name!r}: {spec!r}") from exc
    if not values:
        raise ConfigError(f"sweep axis {name!r} has no values")
    return name, values


def apply_axis(data: dict[str, Any], name: str, value: float) -> None:
    """Set one sweep coordinate on a normalised config mapping."""
    env = data["environment"]
    if name in ("current_angle", "current_speed"):
        speed = math.hypot(env["Vx"], env["Vy"])
        angle = math.atan2(env["Vy"], env["Vx"])
        if name == "current_angle":
            angle = math.radians(value)
        else:
            speed = value
        env["Vx"], env["Vy"] = speed * math.cos(angle), speed * math.sin(angle)
        return
    if name == "u_rd":
        data["reference"] = {"u_rd": value}
        return
    section, _, key = name.partition(".")
    if not key or section not in data or not isinstance(data[section], dict):
        raise ConfigError(f"unknown sweep axis {name!r}")
    data[section][key] = int(value) if isinstance(data[section].get(key), int) else value


def sweep_cells(cfg: ScenarioConfig, axes: Sequence[tuple[str, list[float]]]) -> list[tuple[dict, ScenarioConfig]]:
    base = cfgmod.to_dict(cfg)
    cells = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        data = json.loads(json.dumps(base))
        coords = {}
        for (name, _), v in zip(axes, combo):
            apply_axis(data, name, v)
            coords[name] = v
        cells.append((coords, cfgmod.from_dict(data)))
    return cells


def cmd_sweep(args: argparse.Namespace) -> int:
    from .sim import threads_from_env

    cfg = _load(args)
    axes = [parse_axis(a) for a in args.axis]
    if len(axes) > 2:
        raise ConfigError("a sweep takes at most two axes")
    cells = sweep_cells(cfg, axes)
    out = FilePath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = min(threads_from_env(), len(cells))

    def work(i: int) -> dict[str, Any]:
        coords, c = cells[i]
        try:
            code, s = run_one(c, out / f"cell_{i:03d}", plots=args.plots)
        except Exception as exc:  # recorded, never aborts the sweep
            code, s = EXIT_FAULT, {"faults": [{"kind": "exception", "message": str(exc)}]}
        return {
            "cell": i,
            **coords,
            "clean": code == EXIT_OK,
            "exit_code": code,
            "settling_time": s.get("settling_time", math.nan),
            "v_r_max": s.get("v_r_max", math.nan),
            "Cr_min": s.get("Cr_min", math.nan),
            "condition1_margin_min": s.get("condition1_margin_min", math.nan),
            "tube_radius": s.get("tube_radius", math.nan),
            "faults": "refused" if code == EXIT_REFUSED else ";".join(f["kind"] for f in s.get("faults", [])),
        }

    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(work, range(len(cells))))
    write_summary(rows, [n for n, _ in axes], out / "summary.csv")
    for r in rows:
        print(", ".join(f"{k}={_fmt(v)}" for k, v in r.items()))
    return EXIT_OK if all(r["clean"] for r in rows) else EXIT_FAULT


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def write_summary(rows: list[dict[str, Any]], axis_names: list[str], path: FilePath) -> None:
    cols = ["cell", *axis_names, *SUMMARY_COLUMNS[1:]]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in sorted(rows, key=lambda r: r["cell"]):
            w.writerow([_fmt(r[c]) for c in cols])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="helm-sim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser, out_default: str | None) -> None:
        sp.add_argument("config", help="scenario TOML file")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--dt", type=float, help="override sim.dt")
        sp.add_argument("--t-end", dest="t_end", type=float, help="override sim.t_end")
        sp.add_argument("--force", action="store_true", help="run even if feasibility checks fail")

    common(sub.add_parser("check", help="feasibility and tuning report"), None)
    run = sub.add_parser("run", help="simulate one scenario")
    common(run, "helm-sim-out")
    run.add_argument("--no-plots", action="store_true", help="skip the SVG figures")
    sw = sub.add_parser("sweep", help="run a grid of scenarios")
    common(sw, "helm-sim-sweep")
    sw.add_argument(
        "--axis",
        action="append",
        default=[],
        help="sweep axis, e.g. guidance.Delta=20,40,80 or current_angle=0:360:8 (at most two)",
    )
    sw.add_argument("--plots", action="store_true", help="also write figures for every cell")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    handler = {"check": cmd_check, "run": cmd_run, "sweep": cmd_sweep}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
