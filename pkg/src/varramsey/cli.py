"""Command-line front end: configuration, run manifests and plot-ready CSV output.

Every subcommand resolves its configuration as defaults < config file <
command-line flags, writes CSV/JSON files into the output directory and
finishes with ``manifest.json``.  Passing a manifest as ``--config`` replays
the recorded run.
"""

from __future__ import annotations

import argparse
import contextlib
import copy
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .circuits import CircuitParams, css
from .errors import ConvergenceFailure, EvaluatorFailure, InvalidArgument
from .metrology import Prior, circuit_cost, hl_bmse, psl_bmse, ramsey_time_from_width, sql_bmse

OUT_ENV = "VARRAMSEY_OUT"
ALL_SHAPES = [[0, 0], [1, 0], [0, 2], [1, 2]]
TWO_PI = 2 * np.pi

DEFAULTS = {
    "curve": {
        "n": 12, "shapes": ALL_SHAPES, "widths": "0.2:1.0:0.05", "estimator": "linear",
        "starts": 24, "angles": {}, "oqi": True,
    },
    "bounds": {"n": 12, "widths": "0.2:1.6:0.05"},
    "oqi": {"n": 12, "widths": "0.2:1.2:0.02", "tol": 1e-12, "max_iter": 500, "refine": True},
    "clock": {
        "n": 12, "widths": "0.3:1.4:0.05", "alpha": 2.0, "shapes": [[1, 0], [1, 2]], "starts": 24,
        "bandwidth": TWO_PI * 6.0,
    },
    "optimize": {
        "n": 26, "shape": [1, 2], "prior_width": 0.7403, "evaluator": "ideal", "budget": 300_000,
        "theory_starts": 60, "theory_angles": None,
        "box": {"kind": "theory-scaled", "low": 0.5, "high": 1.5, "displacement": 0.1},
        "constraints": {}, "direct": {}, "noise": {},
        "scan": {"nodes": 10, "shots": 100, "scheme": "half-hermite"},
    },
    "freq-exp": {
        "n": 12, "design_width": 0.6893, "optimized_shape": [1, 2], "optimized_angles": None,
        "theory_starts": 60, "constraints": {}, "ramsey_times": [1e-3, 2e-3, 3e-3, 4e-3, 5e-3, 6e-3],
        "detuning_spread_hz": 40.0, "truncation": 2.0, "samples_per_time": 200, "shots_per_sample": 50,
        "drift_time": 15e-3, "drift_shots": 50, "bootstrap": 200, "noise": {}, "keep_records": False,
    },
    "selftest": {"n": 8},
}
# keys valid for every command
COMMON = {"seed": 0, "threads": None, "out": None}


class UsageError(Exception):
    """Bad configuration or flags; reported with exit status 2."""


# ---------------------------------------------------------------------------
# configuration


def parse_widths(spec) -> np.ndarray:
    """Grid from ``"start:stop:step"`` (stop included), ``"a,b,c"``, a number or a list."""
    if isinstance(spec, (int, float)):
        grid = np.array([float(spec)])
    elif isinstance(spec, str) and ":" in spec:
        try:
            start, stop, step = (float(v) for v in spec.split(":"))
        except ValueError as exc:
            raise UsageError(f"bad grid {spec!r}; expected start:stop:step") from exc
        if step <= 0 or stop < start:
            raise UsageError(f"bad grid {spec!r}")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        grid = start + step * np.arange(count)
    elif isinstance(spec, str):
        grid = np.array([float(v) for v in spec.split(",") if v.strip()])
    else:
        grid = np.asarray(spec, dtype=float).ravel()
    grid = np.unique(np.round(grid, 12))
    if grid.size == 0 or grid[0] <= 0:
        raise UsageError("prior widths must be positive")
    return grid


def _shape(value) -> tuple:
    if isinstance(value, str):
        value = value.strip("()[] ").split(",")
    try:
        shape = tuple(int(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad circuit shape {value!r}") from exc
    if len(shape) != 2 or min(shape) < 0:
        raise UsageError(f"bad circuit shape {value!r}")
    return shape


def _shape_key(shape) -> str:
    return f"{shape[0]},{shape[1]}"


def load_config_file(path) -> tuple[dict, str | None, int | None]:
    """Read YAML or JSON.  A run manifest yields its recorded config, command and seed."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping")
    if "command" in data and "config" in data and "files" in data:
        return dict(data["config"]), data["command"], data.get("seed")
    return data, None, None


def _check_keys(given: dict, allowed: dict, where: str):
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise UsageError(f"unknown {where} key(s): {', '.join(unknown)}")


def _merge(base: dict, override: dict, where: str) -> dict:
    _check_keys(override, base, where)
    out = copy.deepcopy(base)
    for key, value in override.items():
        out[key] = value
    return out


def resolve_config(command: str, file_cfg: dict, flags: dict, env=None) -> dict:
    """Defaults < file < environment (output directory only) < flags."""
    env = os.environ if env is None else env
    base = {**COMMON, **DEFAULTS[command]}
    cfg = _merge(base, file_cfg, "config")
    if env.get(OUT_ENV):
        cfg["out"] = env[OUT_ENV]
    for key, value in flags.items():
        if value is None:
            continue
        if key == "shots":
            if command == "optimize":
                cfg["scan"] = {**cfg["scan"], "shots": value}
            elif command == "freq-exp":
                cfg["shots_per_sample"] = value
            else:
                raise UsageError(f"--shots does not apply to {command}")
            continue
        if key not in cfg:
            raise UsageError(f"--{key.replace('_', '-')} does not apply to {command}")
        cfg[key] = value
    if cfg["out"] is None:
        cfg["out"] = str(Path("varramsey_out") / command)
    if int(cfg["seed"]) < 0:
        raise UsageError("seed must be non-negative")
    return cfg


# ---------------------------------------------------------------------------
# output


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclasses.dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str
    started: str
    finished: str
    files: list

    def write(self, out: Path) -> Path:
        return write_json(out / "manifest.json", dataclasses.asdict(self))


def _stamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# commands


def cmd_curve(cfg: dict, out: Path) -> list:
    from .oqi import oqi_curve
    from .theory import theory_curve

    n = int(cfg["n"])
    widths = parse_widths(cfg["widths"])
    estimator = cfg["estimator"]
    if estimator not in ("linear", "arcsine", "mbmse"):
        raise UsageError(f"unknown estimator {estimator!r}")
    angles = {_shape(k): np.asarray(v, dtype=float) for k, v in (cfg["angles"] or {}).items()}
    oqi = [s.bmse for s in oqi_curve(n, widths)] if cfg["oqi"] else [np.nan] * widths.size
    rows, params_out = [], {}
    for shape in (_shape(s) for s in cfg["shapes"]):
        if shape in angles:
            fixed = CircuitParams.from_vector(shape, angles[shape])
            plist = [fixed] * widths.size
        else:
            results = theory_curve(n, shape, widths, starts=int(cfg["starts"]), seed=int(cfg["seed"]))
            plist = [r.params for r in results]
        params_out[_shape_key(shape)] = [p.to_vector() for p in plist]
        for w, p, c_oqi in zip(widths, plist, oqi):
            rep = circuit_cost(p, n, Prior(w), estimator)
            rows.append([_shape_key(shape), w, rep.bmse, rep.ratio, rep.db, rep.slope,
                         sql_bmse(n, w), hl_bmse(n, w), psl_bmse(w), c_oqi])
    header = ["shape", "prior_width", "bmse", "ratio", "db", "slope", "sql_bmse", "hl_bmse", "psl_bmse",
              "oqi_bmse"]
    return [write_csv(out / "curve.csv", header, rows),
            write_json(out / "params.json", {"widths": widths, "params": params_out})]


def cmd_bounds(cfg: dict, out: Path) -> list:
    n = int(cfg["n"])
    rows = [[w, sql_bmse(n, w), hl_bmse(n, w), psl_bmse(w)] for w in parse_widths(cfg["widths"])]
    return [write_csv(out / "bounds.csv", ["prior_width", "sql_bmse", "hl_bmse", "psl_bmse"], rows)]


def cmd_oqi(cfg: dict, out: Path) -> list:
    from .oqi import oqi_curve, oqi_minimum

    n = int(cfg["n"])
    widths = parse_widths(cfg["widths"])
    sols = oqi_curve(n, widths, float(cfg["tol"]), int(cfg["max_iter"]))
    rows = [[s.prior_width, s.bmse, s.ratio, s.db, s.iterations, s.residual] for s in sols]
    best = min(sols, key=lambda s: s.db)
    summary = {"n": n, "grid_minimum": {"prior_width": best.prior_width, "db": best.db}}
    if cfg["refine"] and widths.size > 2:
        w, sol = oqi_minimum(n, float(widths[0]), float(widths[-1]))
        summary["refined_minimum"] = {"prior_width": w, "db": sol.db, "iterations": sol.iterations}
    return [write_csv(out / "oqi.csv", ["prior_width", "bmse", "ratio", "db", "iterations", "residual"], rows),
            write_json(out / "summary.json", summary)]


def cmd_clock(cfg: dict, out: Path) -> list:
    from .clock import allan_comparison

    n = int(cfg["n"])
    alpha = float(cfg["alpha"])
    widths = parse_widths(cfg["widths"])
    shapes = tuple(_shape(s) for s in cfg["shapes"])
    res = allan_comparison(n, widths, alpha=alpha, shapes=shapes, starts=int(cfg["starts"]),
                           seed=int(cfg["seed"]), gap_shape=shapes[-1])
    rows = []
    for key, opt in res.optima.items():
        for w, c, v in zip(*opt.curve):
            rows.append([opt.label, w, ramsey_time_from_width(cfg["bandwidth"], w, alpha), c, v])
    summary = {
        "n": n, "alpha": alpha,
        "optima": {o.label: {"prior_width": o.prior_width, "normalized_allan": o.normalized, "bmse": o.bmse}
                   for o in res.optima.values()},
        "gains_db": {_shape_key(s): g for s, g in res.gains.items()},
        "gap_to_oqc_db": res.gap_to_oqc,
    }
    header = ["sequence", "prior_width", "ramsey_time", "bmse", "normalized_allan"]
    return [write_csv(out / "clock.csv", header, rows), write_json(out / "summary.json", summary)]


def _noise(spec: dict):
    from .lab import NoiseModel

    _check_keys(spec, {f.name: None for f in dataclasses.fields(NoiseModel)}, "noise")
    return NoiseModel(**spec)


def _constraints(spec: dict):
    from .varopt import Constraints

    _check_keys(spec, {f.name: None for f in dataclasses.fields(Constraints)}, "constraints")
    return Constraints(**spec)


def cmd_optimize(cfg: dict, out: Path) -> list:
    from .lab import ScanSpec, design_slope
    from .varopt import (DirectConfig, IdealEvaluator, LabEvaluator, SearchBox, box_from_theory,
                         constrained_theory, export_trace, incumbent_curve, optimize)

    n, shape, width = int(cfg["n"]), _shape(cfg["shape"]), float(cfg["prior_width"])
    seed = int(cfg["seed"])
    if int(cfg["budget"]) <= 0:
        raise UsageError("budget must be a positive number of shots")
    constraints = _constraints(cfg["constraints"])
    scan_spec = dict(cfg["scan"])
    _check_keys(scan_spec, {f.name: None for f in dataclasses.fields(ScanSpec)}, "scan")
    spec = ScanSpec(**scan_spec)
    direct = dict(cfg["direct"])
    _check_keys(direct, {f.name: None for f in dataclasses.fields(DirectConfig)}, "direct")
    direct.setdefault("seed", seed)
    if cfg["theory_angles"] is not None:
        x_theory = np.asarray(cfg["theory_angles"], dtype=float)
    else:
        x_theory = constrained_theory(n, shape, width, constraints, starts=int(cfg["theory_starts"]),
                                      seed=seed, form="experimental").params.to_vector()
    box_cfg = dict(cfg["box"])
    kind = box_cfg.pop("kind", "theory-scaled")
    if kind == "theory-scaled":
        _check_keys(box_cfg, {"low": 0, "high": 0, "displacement": 0}, "box")
        box = box_from_theory(x_theory, seed=seed, **box_cfg)
    elif kind == "user":
        _check_keys(box_cfg, {"lower": 0, "upper": 0}, "box")
        box = SearchBox(np.asarray(box_cfg["lower"], float), np.asarray(box_cfg["upper"], float), "user")
    else:
        raise UsageError(f"unknown box kind {kind!r}")
    if cfg["evaluator"] == "ideal":
        evaluator = IdealEvaluator(n, shape, width, form="experimental", nominal_shots=spec.total_shots)
    elif cfg["evaluator"] == "lab":
        slope = design_slope(CircuitParams.from_vector(shape, x_theory, "experimental"), n, width)
        evaluator = LabEvaluator(n, shape, width, slope, _noise(cfg["noise"]), spec, seed=seed)
    else:
        raise UsageError(f"unknown evaluator {cfg['evaluator']!r}")
    res = optimize(evaluator, box, shape, n, constraints, int(cfg["budget"]), DirectConfig(**direct))
    names = CircuitParams(*shape, form="experimental").parameter_names()
    best = incumbent_curve(res.trace)
    rows = [[r.index, r.kind, r.cost, r.variance, r.shots, b, *r.params] for r, b in zip(res.trace, best)]
    header = ["index", "kind", "cost", "variance", "shots", "incumbent", *names]
    export_trace(res.trace, out / "trace.jsonl")
    summary = {
        "params": dict(zip(names, res.params)), "cost": res.cost, "variance": res.variance,
        "complete": res.complete, "n_evaluations": res.n_evaluations, "shots_used": res.shots_used,
        "theory_params": dict(zip(names, x_theory)), "box": {"lower": box.lower, "upper": box.upper},
    }
    return [out / "trace.jsonl", write_csv(out / "trace.csv", header, rows), write_json(out / "best.json", summary)]


def cmd_freq_exp(cfg: dict, out: Path) -> list:
    from .lab import FreqExperimentConfig, run_frequency_experiment
    from .varopt import constrained_theory

    n, width = int(cfg["n"]), float(cfg["design_width"])
    shape = _shape(cfg["optimized_shape"])
    if cfg["optimized_angles"] is not None:
        opt = CircuitParams.from_vector(shape, cfg["optimized_angles"], "experimental")
    else:
        opt = constrained_theory(n, shape, width, _constraints(cfg["constraints"]),
                                 starts=int(cfg["theory_starts"]), seed=int(cfg["seed"]),
                                 form="experimental").params
    config = FreqExperimentConfig(
        n_particles=n, css_params=css("experimental"), optimized_params=opt, design_width=width,
        detuning_spread=TWO_PI * float(cfg["detuning_spread_hz"]), truncation=float(cfg["truncation"]),
        samples_per_time=int(cfg["samples_per_time"]), shots_per_sample=int(cfg["shots_per_sample"]),
        ramsey_times=tuple(cfg["ramsey_times"]), drift_time=float(cfg["drift_time"]),
        drift_shots=int(cfg["drift_shots"]), bootstrap=int(cfg["bootstrap"]))
    res = run_frequency_experiment(config, _noise(cfg["noise"]), seed=int(cfg["seed"]),
                                   keep_records=bool(cfg["keep_records"]))
    rows = [[p.ramsey_time, p.sequence, p.std, p.bootstrap_error, p.theory, p.n_estimates] for p in res.points]
    files = [write_csv(out / "freq.csv", ["ramsey_time", "sequence", "std", "bootstrap_error", "theory",
                                          "n_estimates"], rows),
             write_json(out / "sequences.json", {k: p.to_vector() for k, p in config.sequences().items()})]
    if res.records:
        header = list(res.records[0])
        files.append(write_csv(out / "records.csv", header, [[r[k] for k in header] for r in res.records]))
    return files


def cmd_selftest(cfg: dict, out: Path) -> list:
    """Fast internal consistency checks; exits non-zero if any fails."""
    from .metrology import Estimator, bmse as bmse_of, gauss_hermite, simpson
    from .oqi import oqi_bound
    from .circuits import outcome_table
    from .spin import collective_operator

    n = int(cfg["n"])
    checks = []
    jx, jy, jz = (collective_operator(axis, n).matrix for axis in "xyz")
    checks.append(("commutator", float(np.abs(jx @ jy - jy @ jx - 1j * jz).max()), 1e-10))
    rng = np.random.default_rng(int(cfg["seed"]))
    params = CircuitParams.from_vector((1, 1), rng.uniform(-0.3, 0.3, 6))
    prior = Prior(0.6)
    quads = [gauss_hermite(prior, 80), simpson(prior, 4001)]
    costs = [bmse_of(outcome_table(params, n, q.phases), Estimator.linear(-0.5), q).bmse for q in quads]
    checks.append(("quadrature agreement", abs(costs[0] - costs[1]) / costs[0], 1e-6))
    sol = oqi_bound(n, 0.6)
    css_cost = circuit_cost(css(), n, prior).bmse
    checks.append(("HL <= OQI", hl_bmse(n, 0.6) - sol.bmse, 0.0))
    checks.append(("OQI <= CSS", sol.bmse - css_cost, 0.0))
    rows = [[name, value, tol, value <= tol] for name, value, tol in checks]
    for name, value, tol, ok in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {value:.3g} (limit {tol:g})")
    path = write_csv(out / "selftest.csv", ["check", "value", "limit", "passed"], rows)
    if not all(r[3] for r in rows):
        raise EvaluatorFailure("self-test failed")
    return [path]


COMMANDS = {
    "curve": cmd_curve, "bounds": cmd_bounds, "oqi": cmd_oqi, "clock": cmd_clock,
    "optimize": cmd_optimize, "freq-exp": cmd_freq_exp, "selftest": cmd_selftest,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varramsey", description="Variational Ramsey interferometry toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    help_text = {
        "curve": "optimal cost versus prior width for circuit shapes, with bound columns",
        "bounds": "SQL, HL and phase-slip bounds on a width grid",
        "oqi": "optimal quantum interferometer on a width grid",
        "clock": "normalized Allan deviation, gains over the CSS and gap to the optimal clock",
        "optimize": "gradient-free optimization against an ideal or emulated sensor",
        "freq-exp": "emulated frequency-estimation experiment",
        "selftest": "quick internal consistency checks",
    }
    for name, text in help_text.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="YAML or JSON config file, or a run manifest to replay")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV})")
        p.add_argument("--threads", type=int, help="cap on BLAS threads")
        p.add_argument("--shots", type=int, help="shots per scan node (optimize) or per sample (freq-exp)")
        p.add_argument("--n", type=int, help="number of particles")
        if name in ("curve", "bounds", "oqi", "clock"):
            p.add_argument("--widths", help="prior widths as start:stop:step or a comma list")
        if name in ("curve", "clock"):
            p.add_argument("--shapes", nargs="+", help="circuit shapes such as 1,2")
            p.add_argument("--starts", type=int, help="random starts of the theory optimizer")
        if name == "curve":
            p.add_argument("--estimator", choices=("linear", "arcsine", "mbmse"))
        if name == "clock":
            p.add_argument("--alpha", type=float, help="flicker-noise exponent")
        if name == "optimize":
            p.add_argument("--shape", help="circuit shape such as 1,2")
            p.add_argument("--prior-width", type=float)
            p.add_argument("--evaluator", choices=("ideal", "lab"))
            p.add_argument("--budget", type=int, help="total shot budget")
    return parser


def _flags(args) -> dict:
    skip = {"command", "config"}
    flags = {k: v for k, v in vars(args).items() if k not in skip}
    if flags.get("shapes") is not None:
        flags["shapes"] = [list(_shape(s)) for s in flags["shapes"]]
    if flags.get("shape") is not None:
        flags["shape"] = list(_shape(flags["shape"]))
    return flags


def run(command: str, cfg: dict) -> Path:
    """Execute ``command`` with a fully resolved config and write its manifest."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    started = _stamp()
    limit = cfg.get("threads")
    if limit is not None and int(limit) < 1:
        raise UsageError("--threads must be at least 1")
    if limit is not None:
        from threadpoolctl import threadpool_limits
        ctx = threadpool_limits(limits=int(limit))
    else:
        ctx = contextlib.nullcontext()
    with ctx:
        files = COMMANDS[command](cfg, out)
    listing = [{"path": Path(f).name, "sha256": sha256(f), "bytes": Path(f).stat().st_size} for f in files]
    manifest = RunManifest(command, _jsonable(cfg), int(cfg["seed"]), __version__, started, _stamp(), listing)
    return manifest.write(out)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_cfg, recorded, seed = ({}, None, None)
        if args.config:
            file_cfg, recorded, seed = load_config_file(args.config)
            if recorded is not None:
                if recorded != args.command:
                    raise UsageError(f"manifest records command {recorded!r}, not {args.command!r}")
                file_cfg = {k: v for k, v in file_cfg.items() if k != "out"}
                file_cfg.setdefault("seed", seed)
        cfg = resolve_config(args.command, file_cfg, _flags(args))
        t0 = time.perf_counter()
        manifest = run(args.command, cfg)
    except (UsageError, InvalidArgument) as exc:
        parser.error(str(exc))
    except (ConvergenceFailure, EvaluatorFailure) as exc:
        print(f"varramsey {args.command}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {manifest} ({time.perf_counter() - t0:.1f} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
