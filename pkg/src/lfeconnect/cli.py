"""Command line front end: ``solve``, ``verify`` and ``sweep``.

Every flag can also come from a JSON config file (``--config``) whose keys
are the flag names with underscores; flags given on the command line win.
Numbers are written with 17 significant digits.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .connect import (
    ConnectionProblem,
    GridSpec,
    multistart,
    run_starts,
    select_extremal_arrival,
    shoot,
)
from .errors import ConfigError, LFEError, NoConvergence
from .geometry import Event
from .scenarios import CATALOG, build, cap_circle_action, cap_circle_trajectory
from .dynamics import action_I
from .trajectory import dumps, fmt, to_csv
from .verification import verify_scenario

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NO_CONVERGENCE = 2

DEFAULTS = {
    "scenario": None,
    "scenario_file": None,
    "param": [],
    "ratio": None,
    "method": "direct",
    "tol": 1e-10,
    "endpoint_tol": 1e-8,
    "grid": None,
    "out": None,
    "seed": 0,
    "target": "marked",
    "target_chart": None,
    "ratios": None,
    "alphas": None,
    "directions": None,
}


@dataclass
class RunConfig:
    command: str
    scenario: str | None = None
    scenario_file: str | None = None
    params: dict = field(default_factory=dict)
    ratio: float | None = None
    method: str = "direct"
    tol: float = 1e-10
    endpoint_tol: float = 1e-8
    grid: int | None = None
    out: str | None = None
    seed: int = 0
    target: str = "marked"
    target_chart: str | None = None
    ratios: list | None = None
    alphas: list | None = None
    directions: int | None = None

    def __post_init__(self):
        if self.tol <= 0 or self.endpoint_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.ratio is not None and not np.isfinite(self.ratio):
            raise ConfigError("ratio must be finite")
        if self.method not in ("direct", "kk"):
            raise ConfigError(f"method must be 'direct' or 'kk', got {self.method!r}")
        if self.grid is not None and self.grid < 1:
            raise ConfigError("grid must be a positive integer")
        if self.scenario is None and self.scenario_file is None:
            raise ConfigError("a scenario name (--scenario) or file (--scenario-file) is required")


def _parse_list(text, kind=float):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [kind(v) for v in text]
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range must be lo:hi:count, got {text!r}")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        return [kind(v) for v in np.linspace(lo, hi, count)] if count > 0 else []
    return [kind(v) for v in text.split(",") if v.strip()]


def _parse_params(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"parameter must look like key=value, got {item!r}")
        key, val = item.split("=", 1)
        try:
            out[key.strip()] = float(val)
        except ValueError as exc:
            raise ConfigError(f"parameter {key!r} is not a number") from exc
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="lfeconnect", description="Charged-particle connections in static spacetimes.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with default values for the flags")
        p.add_argument("--scenario", default=None, help=f"catalog scenario: {', '.join(sorted(CATALOG))}")
        p.add_argument("--scenario-file", dest="scenario_file", default=None, help="JSON scenario description")
        p.add_argument("--param", action="append", default=None, help="scenario parameter key=value (repeatable)")
        p.add_argument("--ratio", type=float, default=None, help="charge-to-mass ratio")
        p.add_argument("--method", choices=("direct", "kk"), default=None)
        p.add_argument("--tol", type=float, default=None, help="integrator tolerance")
        p.add_argument("--endpoint-tol", dest="endpoint_tol", type=float, default=None)
        p.add_argument("--grid", type=int, default=None, help="multistart grid size N (N directions x N speeds)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed for grid jitter")
        p.add_argument("--target", default=None, help="'marked', a named event, or comma separated coordinates")
        p.add_argument("--target-chart", dest="target_chart", default=None)
        p.add_argument("-v", "--verbose", action="store_true")

    solve = sub.add_parser("solve", help="solve one connection problem")
    common(solve)
    verify = sub.add_parser("verify", help="run the reference checks of a catalog scenario")
    verify.add_argument("name", nargs="?", default=None)
    common(verify)
    sweep = sub.add_parser("sweep", help="tabulate runs over ratios, tilt angles or start directions")
    common(sweep)
    sweep.add_argument("--ratios", default=None, help="comma list or lo:hi:count")
    sweep.add_argument("--alphas", default=None, help="tilt angles in degrees (cap_cylinder): comma list or lo:hi:count")
    sweep.add_argument("--directions", type=int, default=None, help="number of start directions (one speed ring)")
    return parser


def make_config(args):
    values = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    if args.command == "verify" and getattr(args, "name", None):
        values["scenario"] = args.name
    params = values.pop("param")
    if isinstance(params, dict):
        params = [f"{k}={v}" for k, v in params.items()]
    return RunConfig(
        command=args.command,
        scenario=values["scenario"],
        scenario_file=values["scenario_file"],
        params=_parse_params(params),
        ratio=None if values["ratio"] is None else float(values["ratio"]),
        method=values["method"],
        tol=float(values["tol"]),
        endpoint_tol=float(values["endpoint_tol"]),
        grid=None if values["grid"] is None else int(values["grid"]),
        out=values["out"],
        seed=int(values["seed"]),
        target=str(values["target"]),
        target_chart=values["target_chart"],
        ratios=_parse_list(values["ratios"]),
        alphas=_parse_list(values["alphas"]),
        directions=None if values["directions"] is None else int(values["directions"]),
    )


# -- scenario and problem assembly ----------------------------------------------------------


def load_scenario(cfg: RunConfig):
    params = dict(cfg.params)
    events = {}
    name = cfg.scenario
    if cfg.scenario_file:
        try:
            with open(cfg.scenario_file) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scenario file: {exc}") from exc
        name = data.get("name", name)
        params = {**data.get("parameters", {}), **params}
        for key in ("x0", "x1"):
            if key in data:
                events[key] = data[key]
    if name not in CATALOG:
        raise ConfigError(f"unknown scenario {name!r}; known: {sorted(CATALOG)}")
    try:
        spec = build(name, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name!r}: {exc}") from exc
    for key, ev in events.items():
        chart = ev.get("chart", spec.x0.chart)
        if chart not in spec.atlas.charts:
            raise ConfigError(f"unknown chart {chart!r} for event {key}")
        setattr(spec, key, Event(np.asarray(ev["coords"], dtype=float), chart))
    return spec


def resolve_target(cfg, spec):
    t = cfg.target
    if t == "marked":
        return spec.x1
    if t in spec.extra_events:
        return spec.extra_events[t]
    try:
        coords = np.array([float(v) for v in t.split(",")])
    except ValueError:
        raise ConfigError(f"target must be 'marked', one of {sorted(spec.extra_events)} or coordinates") from None
    chart = cfg.target_chart or spec.x0.chart
    if chart not in spec.atlas.charts or len(coords) != spec.atlas.dim:
        raise ConfigError("target coordinates do not match the chart")
    return Event(coords, chart)


def make_problem(cfg, spec, ratio=None):
    ratio = cfg.ratio if ratio is None else ratio
    try:
        return ConnectionProblem(
            spec, x1=resolve_target(cfg, spec), ratio=ratio, method=cfg.method,
            endpoint_tol=cfg.endpoint_tol, tol=cfg.tol,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _pick(problem, results):
    if not results:
        return None
    if problem.method == "kk":
        return select_extremal_arrival(results, problem.ratio)
    return results[0]


def solve_problem(problem, grid=None, seed=0):
    """Single shot from the static direction, or the best multistart result."""
    if grid:
        results = multistart(problem, GridSpec(grid, grid, seed=seed))
        best = _pick(problem, results)
        if best is None:
            raise NoConvergence("no grid start converged", None)
        return best
    return shoot(problem)


def _result_record(cfg, problem, result, csv_name=None):
    rec = {
        "problem": {
            "scenario": problem.scenario.name,
            "ratio": problem.ratio,
            "method": problem.method,
            "x0": {"coords": problem.x0.coords, "chart": problem.x0.chart},
            "x1": {"coords": problem.x1.coords, "chart": problem.x1.chart},
            "endpoint_tol": problem.endpoint_tol,
            "tol": problem.tol,
        },
    }
    if result is None:
        rec.update({"converged": False, "residual": None, "action": None, "nu": None, "winding": None,
                    "conjugate_param": None, "trajectory_ref": None})
    else:
        rec.update(result.summary())
        rec["trajectory_ref"] = csv_name
    return rec


def _write(out, name, text):
    if out is None:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(text)
    return name


def cmd_solve(cfg: RunConfig):
    spec = load_scenario(cfg)
    problem = make_problem(cfg, spec)
    code = EXIT_OK
    try:
        result = solve_problem(problem, cfg.grid, cfg.seed)
    except NoConvergence as exc:
        result = exc.result
        code = EXIT_NO_CONVERGENCE
        print(f"no convergence: {exc}", file=sys.stderr)
    except LFEError as exc:
        result = None
        code = EXIT_NO_CONVERGENCE
        print(f"solve failed: {exc}", file=sys.stderr)
    csv_name = None
    if result is not None and result.converged and cfg.out is not None:
        csv_name = _write(cfg.out, "trajectory.csv", to_csv(result.trajectory))
    rec = _result_record(cfg, problem, result, csv_name)
    if result is not None and not result.converged:
        rec["converged"] = False
    text = dumps(rec) + "\n"
    _write(cfg.out, "result.json", text)
    sys.stdout.write(text)
    return code


def verify_report(name, grid=None, seed=0):
    checks = verify_scenario(name, grid=grid, seed=seed)
    return {
        "scenario": name,
        "grid": grid,
        "seed": seed,
        "passed": all(c.passed for c in checks),
        "checks": [c.as_dict() for c in checks],
    }


def cmd_verify(cfg: RunConfig):
    if cfg.scenario not in CATALOG:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; known: {sorted(CATALOG)}")
    report = verify_report(cfg.scenario, cfg.grid, cfg.seed)
    report["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    text = dumps(report) + "\n"
    _write(cfg.out, f"verify_{cfg.scenario}.json", text)
    sys.stdout.write(text)
    return EXIT_OK if report["passed"] else EXIT_NO_CONVERGENCE


SWEEP_COLUMNS = ["index", "ratio", "alpha_deg", "xi0", "xi1", "converged", "residual", "action", "reference",
                 "nu", "winding", "conjugate_param", "status"]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(float(v))
    return str(v).replace(",", ";")


def sweep_rows(cfg: RunConfig):
    spec = load_scenario(cfg)
    modes = [m for m in ("ratios", "alphas", "directions") if getattr(cfg, m) is not None]
    if len(modes) != 1:
        raise ConfigError("sweep needs exactly one of --ratios, --alphas, --directions")
    rows = []
    if cfg.ratios is not None:
        if not cfg.ratios:
            raise ConfigError("empty ratio range")
        for i, q in enumerate(cfg.ratios):
            row = {"index": i, "ratio": q}
            try:
                res = solve_problem(make_problem(cfg, spec, q), cfg.grid, cfg.seed)
                row.update(_row_from(res))
            except NoConvergence as exc:
                row.update(_row_from(exc.result))
                row["converged"] = False
                row["status"] = str(exc)
            except LFEError as exc:
                row.update({"converged": False, "status": f"{type(exc).__name__}: {exc}"})
            rows.append(row)
    elif cfg.alphas is not None:
        if not cfg.alphas:
            raise ConfigError("empty alpha range")
        if spec.name != "cap_cylinder":
            raise ConfigError("alpha sweeps are defined for the cap_cylinder scenario")
        ratio = spec.ratio if cfg.ratio is None else cfg.ratio
        for i, deg in enumerate(cfg.alphas):
            alpha = np.deg2rad(deg)
            traj = cap_circle_trajectory(spec, alpha)
            val = action_I(spec.atlas, spec.potential, ratio, traj, tol=1e-8).value
            ref = cap_circle_action(alpha, spec.parameters["r"], ratio, spec.parameters["B"])
            rows.append({"index": i, "ratio": ratio, "alpha_deg": deg, "converged": True, "action": val,
                         "reference": ref, "status": "constructed circle"})
    else:
        if cfg.directions < 1:
            raise ConfigError("empty direction grid")
        problem = make_problem(cfg, spec)
        grid = GridSpec(cfg.directions, 1, seed=cfg.seed)
        for i, res in enumerate(run_starts(problem, grid.starts(problem.k))):
            row = {"index": i, "ratio": problem.ratio}
            row.update(_row_from(res))
            rows.append(row)
    return rows


def _row_from(res):
    if res is None:
        return {"converged": False}
    return {
        "xi0": float(res.xi[0]),
        "xi1": float(res.xi[1]) if len(res.xi) > 1 else None,
        "converged": bool(res.converged),
        "residual": res.endpoint_residual,
        "action": None if res.action is None else res.action.value,
        "nu": res.nu,
        "winding": res.homotopy_tag,
        "conjugate_param": res.first_conjugate,
        "status": res.status,
    }


def cmd_sweep(cfg: RunConfig):
    rows = sweep_rows(cfg)
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join(_cell(row.get(c)) for c in SWEEP_COLUMNS))
    text = "\n".join(lines) + "\n"
    _write(cfg.out, "sweep.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = make_config(args)
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
