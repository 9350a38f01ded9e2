"""Command-line experiment runner.

    jumpflow run det-ag --preset linear
    jumpflow run moments --alpha 1.0 --eta 2
    jumpflow run --config weak.json --threads 4 --out out/weak
    jumpflow suite acceptance --out out/acceptance

``run`` writes ``report.json``, ``table.csv`` and ``manifest.json`` into the
output directory.  Exit status: 0 when every configured check passes, 1 on a
failed check, 2 on a configuration error (nothing is written then).
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import platform
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .errors import ConfigError, JumpFlowError
from .mc import default_threads

EXPERIMENT_NAMES = ["det-ag", "weak-ag", "ito-check", "mecke-ipp", "sko-chasles", "moments",
                    "flow-prop", "continuity-probe"]

_EXPR = {"type": "string", "maxLength": 500}
_POS_INT = {"type": "integer", "minimum": 1}
_POS = {"type": "number", "exclusiveMinimum": 0}
_COEFFS = {"type": "object", "properties": {"b": _EXPR, "g": _EXPR, "bbar": _EXPR},
           "additionalProperties": False}
_MEASURE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["truncated_stable", "tempered_stable", "compound_poisson"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
        "cutoff": _POS, "beta": _POS, "rate": {"type": "number", "minimum": 0},
        "sizes": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "probs": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "dist": {"type": "string", "pattern": "^[a-z_0-9]+$"},
        "dist_args": {"type": "array", "items": {"type": "number"}},
        "dist_kwds": {"type": "object", "additionalProperties": {"type": "number"}},
    },
    "required": ["kind"],
    "additionalProperties": False,
}
_SIZE_LIST = {"type": "array", "items": {"type": "string"}, "minItems": 1}

SCHEMA = {
    "type": "object",
    "properties": {
        "experiment": {"enum": EXPERIMENT_NAMES},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "model": {
            "type": "object",
            "properties": {
                "preset": {"enum": ["linear", "logistic", "custom", "default", "null", "polynomial", "halving"]},
                "measure": _MEASURE,
                "coefficients": _COEFFS,
                "perturbed": _COEFFS,
                "f": _EXPR,
                "y0": {"type": "number"}, "x0": {"type": "number"},
                "a": {"type": "number"}, "abar": {"type": "number"},
                "s": {"type": "number", "minimum": 0}, "T": _POS,
                "eta": {"oneOf": [{"type": "number", "minimum": 0},
                                  {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}]},
                "split_time": _POS,
                "sizes": _SIZE_LIST,
                "closed_form": {
                    "type": "object",
                    "properties": {"gamma": {"type": "number"}, "t0": {"type": "number", "minimum": 0},
                                   "t1": {"type": "number"}, "sizes": _SIZE_LIST, "weight": {"type": "number"}},
                    "required": ["gamma", "t0", "t1", "sizes", "weight"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "numerics": {
            "type": "object",
            "properties": {
                "eps": _POS, "nsteps": _POS_INT, "n_paths": {"type": "integer", "minimum": 2},
                "n_paths_pathwise": _POS_INT, "tangent_paths": _POS_INT, "n_integrands": _POS_INT,
                "n_cases": _POS_INT, "ode_steps": _POS_INT, "r_intervals": _POS_INT,
                "r_grid_size": _POS_INT, "z_nodes": _POS_INT, "lambda_nodes": _POS_INT,
                "block_size": _POS_INT, "r_rule": {"enum": ["midpoint", "stratified"]},
                "scheme": {"enum": ["euler", "rk4"]}, "mode": {"enum": ["exact", "halving"]},
                "tail_eps": {"type": "array", "items": _POS, "minItems": 1},
                "deltas": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "hs": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "fd_h": _POS, "fd_h2": _POS,
            },
            "additionalProperties": False,
        },
        "checks": {
            "type": "object",
            "properties": {"tolerance_scale": {"type": "number", "minimum": 0},
                           "residual_tol": _POS, "require_detectable": {"type": "boolean"},
                           "slack": {"type": "number", "minimum": 0, "maximum": 1}},
            "additionalProperties": False,
        },
        "output": {"type": "object", "properties": {"dir": {"type": "string"}}, "additionalProperties": False},
    },
    "required": ["experiment"],
    "additionalProperties": False,
}

_TS1 = {"kind": "truncated_stable", "alpha": 1.0, "cutoff": 1.0}
DEFAULTS = {
    "det-ag": {"model": {"preset": "linear"}, "numerics": {"ode_steps": 10_000, "r_intervals": 1000}},
    "weak-ag": {"model": {"preset": "default", "measure": _TS1, "f": "x**2", "y0": 0.3, "T": 1.0},
                "numerics": {"eps": 0.05, "n_paths": 200_000, "nsteps": 16, "r_grid_size": 8, "z_nodes": 6,
                             "lambda_nodes": 2, "r_rule": "stratified", "scheme": "rk4", "block_size": 512}},
    "ito-check": {"model": {"preset": "polynomial"}, "numerics": {"eps": 0.1, "n_paths": 100}},
    "mecke-ipp": {"model": {"measure": _TS1}, "numerics": {"eps": 0.1, "n_paths": 100_000, "n_cases": 20}},
    "sko-chasles": {"model": {"measure": _TS1},
                    "numerics": {"eps": 0.1, "n_paths": 100_000, "n_paths_pathwise": 1000, "n_integrands": 4}},
    "moments": {"model": {"measure": _TS1, "eta": [2.0]}, "numerics": {"tail_eps": [0.05, 0.1, 0.5]}},
    "flow-prop": {"model": {"measure": _TS1},
                  "numerics": {"eps": 0.05, "nsteps": 40, "n_paths": 1000, "tangent_paths": 100}},
    "continuity-probe": {"model": {"measure": _TS1},
                         "numerics": {"eps": 0.05, "n_paths": 10_000, "nsteps": 64,
                                      "deltas": [0.0, 0.01, 0.02, 0.04], "hs": [0.0, 0.025, 0.05, 0.1]}},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "measure":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None


def resolve_config(user: dict, experiment: str | None = None) -> dict:
    """Validate the user config, then fill in the experiment defaults."""
    user = dict(user)
    if experiment is not None:
        if "experiment" in user and user["experiment"] != experiment:
            raise ConfigError(f"config is for {user['experiment']!r}, command asked for {experiment!r}")
        user["experiment"] = experiment
    validate(user)
    cfg = _merge({"seed": 0, "model": {}, "numerics": {}, "checks": {"tolerance_scale": 1.0}},
                 DEFAULTS[user["experiment"]])
    cfg = _merge(cfg, user)
    validate(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else (None if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False)


def write_table(rows, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["term", "estimate", "stderr", "n", "z_score"])
        for term, est, se, n, z in rows:
            w.writerow([term, repr(float(est)), repr(float(se)), int(n), repr(float(z))])


def _apply_overrides(user: dict, args) -> dict:
    user = copy.deepcopy(user)
    model = user.setdefault("model", {})
    num = user.setdefault("numerics", {})
    checks = user.setdefault("checks", {})
    if args.preset is not None:
        model["preset"] = args.preset
    if args.alpha is not None:
        exp = user.get("experiment") or args.experiment
        base = model.get("measure") or copy.deepcopy(DEFAULTS.get(exp, {}).get("model", {}).get("measure", _TS1))
        if base.get("kind") not in ("truncated_stable", "tempered_stable"):
            raise ConfigError("--alpha needs a stable-type measure")
        model["measure"] = {**base, "alpha": args.alpha}
    if args.eta is not None:
        model["eta"] = args.eta
    if args.n_paths is not None:
        num["n_paths"] = args.n_paths
    if args.nsteps is not None:
        num["nsteps"] = args.nsteps
    if args.eps is not None:
        num["eps"] = args.eps
    if args.tolerance_scale is not None:
        checks["tolerance_scale"] = args.tolerance_scale
    if args.seed is not None:
        user["seed"] = args.seed
    for key in ("model", "numerics", "checks"):
        if not user[key]:
            del user[key]
    return user


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def manifest(cfg: dict, wall_time: float, threads: int, extra: dict | None = None) -> dict:
    return {"config": cfg, "config_sha256": config_hash(cfg), "seed": cfg.get("seed"),
            "jumpflow_version": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "threads": threads,
            "wall_time_s": round(wall_time, 3), **(extra or {})}


def cmd_run(args) -> int:
    from .experiments import run_experiment
    try:
        user = _apply_overrides(_load_config(args.config), args)
        if args.experiment is None and "experiment" not in user:
            raise ConfigError("no experiment given (positional argument or 'experiment' in the config)")
        cfg = resolve_config(user, args.experiment)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    threads = default_threads() if args.threads is None else args.threads
    out_dir = Path(args.out or cfg.get("output", {}).get("dir") or f"jumpflow-out/{cfg['experiment']}")
    t0 = time.perf_counter()
    try:
        outcome = run_experiment(cfg, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except JumpFlowError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    wall = time.perf_counter() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {**outcome.report, "passed": outcome.passed, "failures": outcome.failures,
              "seed": cfg["seed"], "config_sha256": config_hash(cfg)}
    (out_dir / "report.json").write_text(canonical_json(report) + "\n")
    write_table(outcome.rows, out_dir / "table.csv")
    (out_dir / "manifest.json").write_text(canonical_json(manifest(cfg, wall, threads)) + "\n")
    for msg in outcome.failures:
        print(f"FAIL {msg}", file=sys.stderr)
    print(f"{cfg['experiment']}: {'PASS' if outcome.passed else 'FAIL'} -> {out_dir}")
    return 0 if outcome.passed else 1


def cmd_suite(args) -> int:
    from .acceptance import CRITERIA, run_suite
    if args.name != "acceptance":
        print(f"config error: unknown suite {args.name!r}", file=sys.stderr)
        return 2
    try:
        ids = None if args.criteria is None else [int(c) for c in args.criteria.split(",")]
        if ids is not None and any(c not in CRITERIA for c in ids):
            raise ValueError
    except ValueError:
        print(f"config error: --criteria expects ids from {sorted(CRITERIA)}", file=sys.stderr)
        return 2
    scale = 1.0 if args.tolerance_scale is None else args.tolerance_scale
    if scale < 0:
        print("config error: --tolerance-scale must be nonnegative", file=sys.stderr)
        return 2
    threads = default_threads() if args.threads is None else args.threads
    seed = 0 if args.seed is None else args.seed
    t0 = time.perf_counter()
    results = run_suite(ids, tolerance_scale=scale, threads=threads, seed=seed,
                        log=lambda line: print(line, flush=True))
    wall = time.perf_counter() - t0
    summary = {"suite": "acceptance", "seed": seed, "tolerance_scale": scale,
               "passed": all(r.passed for r in results), "criteria": [r.to_dict() for r in results]}
    out_dir = Path(args.out or "jumpflow-out/acceptance")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(canonical_json(summary) + "\n")
    cfg = {"suite": "acceptance", "seed": seed, "tolerance_scale": scale, "criteria": ids}
    (out_dir / "manifest.json").write_text(canonical_json(manifest(cfg, wall, threads)) + "\n")
    print(f"acceptance: {'PASS' if summary['passed'] else 'FAIL'} -> {out_dir}")
    return 0 if summary["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jumpflow", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"jumpflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (64-bit)")
    common.add_argument("--threads", type=int, help="worker threads (default: JUMPFLOW_THREADS or 1)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--tolerance-scale", type=float, help="multiply every check tolerance")

    r = sub.add_parser("run", parents=[common], help="run one experiment")
    r.add_argument("experiment", nargs="?", choices=EXPERIMENT_NAMES)
    r.add_argument("--config", help="JSON experiment config")
    r.add_argument("--preset")
    r.add_argument("--alpha", type=float, help="stability index of the Lévy measure")
    r.add_argument("--eta", type=float, help="moment order (moments)")
    r.add_argument("--n-paths", type=int)
    r.add_argument("--nsteps", type=int)
    r.add_argument("--eps", type=float, help="small-jump truncation level")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", parents=[common], help="run a named battery")
    s.add_argument("name", choices=["acceptance"])
    s.add_argument("--criteria", help="comma-separated criterion ids (default: all)")
    s.set_defaults(func=cmd_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
