"""Benchmark harness and command-line interface.

A suite is one JSON config: a list of problem generator specs crossed with a
list of optimizer specs, each cell repeated ``repeats`` times.  Every cell
gets its own derived seed and its own CSV of per-iteration records; a summary
JSON collects resolved settings, per-cell outcomes, and a digest of the
resolved config so outputs are traceable to the exact configuration that
produced them.

Subcommands: ``run`` (execute a suite), ``plotdata`` (extract a metric column
as (t, value) lines), ``verify`` (the desk-scale check table), and
``print-schema``.  Exit codes: 0 success, 1 a run or check failed, 2 the
input was malformed.
"""

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
from pathlib import Path
from time import perf_counter

import numpy as np

from .errors import (
    CapabilityError,
    ConfigError,
    DivergenceError,
    PreconditionError,
)
from .metrics import gap_restricted
from .optim import AVERAGING, METHODS, OptimizerConfig, run
from .precond import (
    CLIP_VARIANTS,
    PRESET_NAMES,
    RULES,
    SCHEDULES,
    SOURCES,
    ScalingState,
    scaling_preset,
)
from .problems import make_bilinear, make_minty, make_quadratic
from .verify import CHECK_ORDER, run_all

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

CSV_HEADER = "t,r2_weighted,dist2,grad_norm2,gap,dhat_min,dhat_max,grad_calls"
DEFAULT_MASTER_SEED = 42
THREADS_ENV = "SADDLE_SCALE_THREADS"

TRANSFORMS = ("none", "log10", "log")


# ---------------------------------------------------------------------------
# config validation: every error carries the JSON path of the offending field


def _sub(field, key):
    return key if field == "<root>" else f"{field}.{key}"


def _req(obj, key, field):
    if key not in obj:
        raise ConfigError(_sub(field, key), "required key is missing")
    return obj[key]


def _opt(obj, key, default):
    return obj.get(key, default)


def _no_unknown(obj, allowed, field):
    for k in obj:
        if k not in allowed:
            raise ConfigError(_sub(field, k), "unknown key")


def _as_int(v, field, lo=None):
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigError(field, "must be an integer")
    if lo is not None and v < lo:
        raise ConfigError(field, f"must be >= {lo}")
    return v


def _as_num(v, field, lo=None, lo_open=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(field, "must be a number")
    v = float(v)
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(field, f"must be {'>' if lo_open else '>='} {lo}")
    return v


def _as_bool(v, field):
    if not isinstance(v, bool):
        raise ConfigError(field, "must be true or false")
    return v


def _as_str(v, field, choices=None):
    if not isinstance(v, str):
        raise ConfigError(field, "must be a string")
    if choices is not None and v not in choices:
        raise ConfigError(field, f"must be one of {', '.join(choices)}")
    return v


_PROBLEM_KEYS = {
    "quadratic": ("kind", "d_x", "d_y", "mu", "L", "seed", "sigma",
                  "noise_bound"),
    "bilinear": ("kind", "d", "L", "seed", "sigma", "noise_bound"),
    "minty-example": ("kind", "seed", "sigma", "noise_bound"),
}


def resolve_problem(spec, field):
    if not isinstance(spec, dict):
        raise ConfigError(field, "must be an object")
    kind = _as_str(_req(spec, "kind", field), f"{field}.kind",
                   choices=tuple(_PROBLEM_KEYS))
    _no_unknown(spec, _PROBLEM_KEYS[kind], field)
    out = {"kind": kind,
           "seed": _as_int(_opt(spec, "seed", 0), f"{field}.seed", lo=0),
           "sigma": _as_num(_opt(spec, "sigma", 0.0), f"{field}.sigma", lo=0.0)}
    nb = _opt(spec, "noise_bound", None)
    out["noise_bound"] = (None if nb is None
                          else _as_num(nb, f"{field}.noise_bound", lo=0.0,
                                       lo_open=True))
    if kind == "quadratic":
        out["d_x"] = _as_int(_req(spec, "d_x", field), f"{field}.d_x", lo=1)
        out["d_y"] = _as_int(_req(spec, "d_y", field), f"{field}.d_y", lo=1)
        out["mu"] = _as_num(_req(spec, "mu", field), f"{field}.mu", lo=0.0,
                            lo_open=True)
        out["L"] = _as_num(_req(spec, "L", field), f"{field}.L", lo=0.0,
                           lo_open=True)
        if out["L"] < out["mu"]:
            raise ConfigError(f"{field}.L", "must be >= mu")
    elif kind == "bilinear":
        out["d"] = _as_int(_req(spec, "d", field), f"{field}.d", lo=1)
        out["L"] = _as_num(_req(spec, "L", field), f"{field}.L", lo=0.0,
                           lo_open=True)
    return out


def build_problem(resolved):
    kw = {"sigma": resolved["sigma"], "noise_bound": resolved["noise_bound"],
          "seed": resolved["seed"]}
    if resolved["kind"] == "quadratic":
        return make_quadratic(resolved["d_x"], resolved["d_y"],
                              resolved["mu"], resolved["L"], **kw)
    if resolved["kind"] == "bilinear":
        return make_bilinear(resolved["d"], resolved["L"], **kw)
    return make_minty(**kw)


_SCALING_PRESET_KEYS = ("preset", "update_prob", "update_every_k")
_SCALING_FULL_KEYS = ("rule", "source", "schedule", "beta", "floor_e",
                      "update_prob", "clip_variant", "update_every_k")


def resolve_scaling(spec, field):
    if not isinstance(spec, dict):
        raise ConfigError(field, "must be an object")
    every_k = _opt(spec, "update_every_k", None)
    if every_k is not None:
        every_k = _as_int(every_k, f"{field}.update_every_k", lo=1)
    prob = _as_num(_opt(spec, "update_prob", 1.0), f"{field}.update_prob")
    if not 0.0 < prob <= 1.0:
        raise ConfigError(f"{field}.update_prob", "must lie in (0, 1]")
    if every_k is not None and prob < 1.0:
        raise ConfigError(f"{field}.update_every_k",
                          "mutually exclusive with update_prob < 1")
    if "preset" in spec:
        _no_unknown(spec, _SCALING_PRESET_KEYS, field)
        name = _as_str(spec["preset"], f"{field}.preset", choices=PRESET_NAMES)
        return {"preset": name, "update_prob": prob,
                "update_every_k": every_k}
    _no_unknown(spec, _SCALING_FULL_KEYS, field)
    return {
        "rule": _as_str(_req(spec, "rule", field), f"{field}.rule",
                        choices=RULES),
        "source": _as_str(_req(spec, "source", field), f"{field}.source",
                          choices=SOURCES),
        "schedule": _as_str(_req(spec, "schedule", field), f"{field}.schedule",
                            choices=SCHEDULES),
        "beta": _as_num(_req(spec, "beta", field), f"{field}.beta"),
        "floor_e": _as_num(_req(spec, "floor_e", field), f"{field}.floor_e",
                           lo=0.0, lo_open=True),
        "clip_variant": _as_str(_opt(spec, "clip_variant", "max"),
                                f"{field}.clip_variant",
                                choices=CLIP_VARIANTS),
        "update_prob": prob,
        "update_every_k": every_k,
    }


def build_scaling(resolved, d_x, d_y):
    if "preset" in resolved:
        return scaling_preset(resolved["preset"], d_x, d_y,
                              update_prob=resolved["update_prob"],
                              update_every_k=resolved["update_every_k"])
    return ScalingState.create(d_x=d_x, d_y=d_y, **resolved)


_OPTIMIZER_KEYS = ("method", "T", "gamma", "scaling", "eta", "anchor_prob",
                   "batch", "averaging", "ema_lambda", "theory_safe",
                   "expect_divergence", "label")


def resolve_optimizer(spec, field):
    if not isinstance(spec, dict):
        raise ConfigError(field, "must be an object")
    _no_unknown(spec, _OPTIMIZER_KEYS, field)
    method = _as_str(_req(spec, "method", field), f"{field}.method",
                     choices=METHODS)
    gamma = _req(spec, "gamma", field)
    if gamma is not None:
        gamma = _as_num(gamma, f"{field}.gamma", lo=0.0)
    out = {
        "method": method,
        "T": _as_int(_req(spec, "T", field), f"{field}.T", lo=0),
        "gamma": gamma,
        "scaling": resolve_scaling(_opt(spec, "scaling", {"preset": "identity"}),
                                   f"{field}.scaling"),
        "eta": _as_num(_opt(spec, "eta", 0.0), f"{field}.eta", lo=0.0),
        "anchor_prob": _as_num(_opt(spec, "anchor_prob", 0.25),
                               f"{field}.anchor_prob"),
        "batch": _as_int(_opt(spec, "batch", 1), f"{field}.batch", lo=1),
        "averaging": _as_str(_opt(spec, "averaging", "uniform"),
                             f"{field}.averaging", choices=AVERAGING),
        "ema_lambda": _as_num(_opt(spec, "ema_lambda", 0.999),
                              f"{field}.ema_lambda"),
        "theory_safe": _as_bool(_opt(spec, "theory_safe", False),
                                f"{field}.theory_safe"),
        "expect_divergence": _as_bool(_opt(spec, "expect_divergence", False),
                                      f"{field}.expect_divergence"),
    }
    if not 0.0 < out["anchor_prob"] <= 1.0:
        raise ConfigError(f"{field}.anchor_prob", "must lie in (0, 1]")
    if not 0.0 <= out["ema_lambda"] < 1.0:
        raise ConfigError(f"{field}.ema_lambda", "must lie in [0, 1)")
    out["label"] = _as_str(_opt(spec, "label", method), f"{field}.label")
    return out


def resolve_config(doc):
    """Validate a parsed JSON document and fill in every default."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    _no_unknown(doc, ("name", "master_seed", "output_dir", "repeats",
                      "problems", "optimizers"), "<root>")
    name = _as_str(_req(doc, "name", "<root>"), "name")
    if not name:
        raise ConfigError("name", "must be non-empty")
    problems = _req(doc, "problems", "<root>")
    optimizers = _req(doc, "optimizers", "<root>")
    if not isinstance(problems, list) or not problems:
        raise ConfigError("problems", "must be a non-empty list")
    if not isinstance(optimizers, list) or not optimizers:
        raise ConfigError("optimizers", "must be a non-empty list")
    return {
        "name": name,
        "master_seed": _as_int(_opt(doc, "master_seed", DEFAULT_MASTER_SEED),
                               "master_seed", lo=0),
        "output_dir": _as_str(_opt(doc, "output_dir", "runs"), "output_dir"),
        "repeats": _as_int(_opt(doc, "repeats", 1), "repeats", lo=1),
        "problems": [resolve_problem(p, f"problems[{i}]")
                     for i, p in enumerate(problems)],
        "optimizers": [resolve_optimizer(o, f"optimizers[{j}]")
                       for j, o in enumerate(optimizers)],
    }


def suite_digest(resolved):
    """Hex digest of the canonical resolved config.

    ``output_dir`` is excluded: where results are stored is not part of the
    experiment's identity.
    """
    doc = {k: v for k, v in resolved.items() if k != "output_dir"}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def cell_seed(master_seed, cell_index):
    """Derived seed for one (problem, optimizer, repeat) cell: distinct per
    cell, stable across runs and across execution order."""
    words = np.random.SeedSequence([master_seed, cell_index]).generate_state(2)
    return (int(words[0]) << 32) | int(words[1])


# ---------------------------------------------------------------------------
# suite execution


def _fmt(v):
    return format(v, ".17g")


def _write_rows(fh, chunk):
    lines = []
    for r in chunk:
        gap = "" if r.gap is None else _fmt(r.gap)
        lines.append(f"{r.t},{_fmt(r.r2_weighted)},{_fmt(r.dist2)},"
                     f"{_fmt(r.grad_norm2)},{gap},{_fmt(r.dhat_min)},"
                     f"{_fmt(r.dhat_max)},{r.grad_calls}")
    fh.write("\n".join(lines) + "\n")


def _final_gap(problem, traj, averaging, ema_lambda):
    """Restricted gap of the configured average, on a ball big enough for
    both the solution and everything the run visited; None when the problem
    has no gap notion or the run never moved."""
    if not traj.records:
        return None
    z_avg = (traj.final_avg_uniform if averaging == "uniform"
             else traj.final_avg_ema)
    zs = problem.z_star
    omega = (max(float(np.linalg.norm(zs.x)), float(np.linalg.norm(zs.y)))
             + 2.0 * float(np.sqrt(max(r.dist2 for r in traj.records))) + 1.0)
    try:
        return gap_restricted(problem, z_avg, omega)
    except (CapabilityError, PreconditionError):
        return None


def run_cell(resolved, digest, out_dir, cell):
    """Execute one cell and write its CSV; returns the summary entry."""
    i, j, rep, index = cell
    pspec = resolved["problems"][i]
    ospec = resolved["optimizers"][j]
    problem = build_problem(pspec)
    seed = cell_seed(resolved["master_seed"], index)
    cfg = OptimizerConfig(
        method=ospec["method"], T=ospec["T"], seed=seed,
        scaling=build_scaling(ospec["scaling"], problem.d_x, problem.d_y),
        gamma=ospec["gamma"], eta=ospec["eta"],
        anchor_prob=ospec["anchor_prob"], batch=ospec["batch"],
        averaging=ospec["averaging"], ema_lambda=ospec["ema_lambda"],
        theory_safe=ospec["theory_safe"])
    csv_name = f"cell_{i}_{j}_{rep}.csv"
    path = out_dir / csv_name
    diverged = False
    note = None
    t0 = perf_counter()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        try:
            traj = run(problem, cfg, on_records=lambda c: _write_rows(fh, c))
        except DivergenceError as exc:
            diverged = True
            note = str(exc)
            traj = exc.trajectory
        fh.write(f"# suite_digest={digest}\n")
    runtime = perf_counter() - t0
    final = traj.final_z.as_vector() - problem.z_star.as_vector()
    entry = {
        "problem_index": i,
        "optimizer_index": j,
        "repeat": rep,
        "cell_index": index,
        "label": ospec["label"],
        "seed": seed,
        "csv": csv_name,
        "diverged": diverged,
        "expect_divergence": ospec["expect_divergence"],
        "passed": diverged == ospec["expect_divergence"],
        "grad_calls": traj.grad_calls,
        "hvp_calls": traj.hvp_calls,
        "final_dist2": float(final @ final),
        "final_gap": (None if diverged
                      else _final_gap(problem, traj, ospec["averaging"],
                                      ospec["ema_lambda"])),
        "runtime_s": runtime,
    }
    if note is not None:
        entry["divergence"] = note
    return entry


def _pool_size(n_cells):
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return max(1, min(n_cells, os.cpu_count() or 1))
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"must be a positive integer, got {raw!r}")
    if workers < 1:
        raise ConfigError(THREADS_ENV, "must be a positive integer")
    return min(workers, max(1, n_cells))


def run_suite(resolved, echo=print):
    """Execute every cell of a resolved config; returns (summary, exit_code).

    Cell outputs depend only on the resolved config, never on worker count
    or scheduling, so serial and parallel runs emit identical files.
    """
    digest = suite_digest(resolved)
    echo(f"suite {resolved['name']}: master seed {resolved['master_seed']}, "
         f"digest {digest}")
    out_dir = Path(resolved["output_dir"]) / resolved["name"]
    out_dir.mkdir(parents=True, exist_ok=True)
    n_opt = len(resolved["optimizers"])
    reps = resolved["repeats"]
    cells = [(i, j, r, (i * n_opt + j) * reps + r)
             for i in range(len(resolved["problems"]))
             for j in range(n_opt)
             for r in range(reps)]
    workers = _pool_size(len(cells))
    job = lambda cell: run_cell(resolved, digest, out_dir, cell)
    if workers == 1:
        entries = [job(c) for c in cells]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
            entries = list(ex.map(job, cells))
    all_passed = all(e["passed"] for e in entries)
    summary = {
        "name": resolved["name"],
        "master_seed": resolved["master_seed"],
        "suite_digest": digest,
        "resolved_config": resolved,
        "workers": workers,
        "cells": entries,
        "all_passed": all_passed,
    }
    summary_path = out_dir / "summary.json"
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    for e in entries:
        status = "ok" if e["passed"] else "FAIL"
        extra = " (diverged)" if e["diverged"] else ""
        echo(f"  cell {e['cell_index']} [{e['label']}] {status}{extra} "
             f"-> {e['csv']}")
    echo(f"summary: {summary_path}")
    return summary, (EXIT_OK if all_passed else EXIT_FAILED)


# ---------------------------------------------------------------------------
# plotdata


def cmd_plotdata(path, metric, transform="none", stride=1, out=None,
                 err=None):
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    if stride < 1:
        print("stride must be >= 1", file=err)
        return EXIT_USAGE
    if transform not in TRANSFORMS:
        print(f"unknown transform {transform!r}; available: "
              f"{', '.join(TRANSFORMS)}", file=err)
        return EXIT_USAGE
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh
                     if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=err)
        return EXIT_USAGE
    if not lines:
        print(f"{path} has no header row", file=err)
        return EXIT_USAGE
    columns = lines[0].split(",")
    if metric not in columns:
        print(f"unknown metric {metric!r}; columns: {', '.join(columns)}",
              file=err)
        return EXIT_USAGE
    t_idx = columns.index("t")
    m_idx = columns.index(metric)
    emitted = 0
    skipped = 0
    for k, line in enumerate(lines[1:]):
        if k % stride:
            continue
        parts = line.split(",")
        raw = parts[m_idx]
        if raw == "":
            skipped += 1
            continue
        v = float(raw)
        if transform != "none":
            if v <= 0.0:
                skipped += 1
                continue
            v = np.log10(v) if transform == "log10" else np.log(v)
        print(f"{parts[t_idx]} {_fmt(v)}", file=out)
        emitted += 1
    if skipped:
        print(f"skipped {skipped} rows (empty or non-positive under "
              f"{transform})", file=err)
    if emitted == 0:
        print(f"no plottable values for metric {metric!r}", file=err)
        return EXIT_USAGE
    return EXIT_OK


# ---------------------------------------------------------------------------
# schema


SCHEMA = {
    "type": "object",
    "required": ["name", "problems", "optimizers"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "master_seed": {"type": "integer", "minimum": 0,
                        "default": DEFAULT_MASTER_SEED},
        "output_dir": {"type": "string", "default": "runs"},
        "repeats": {"type": "integer", "minimum": 1, "default": 1},
        "problems": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["kind"],
                "description": ("quadratic needs d_x, d_y, mu, L; bilinear "
                                "needs d, L; minty-example needs nothing "
                                "beyond the shared keys"),
                "properties": {
                    "kind": {"enum": list(_PROBLEM_KEYS)},
                    "d_x": {"type": "integer", "minimum": 1},
                    "d_y": {"type": "integer", "minimum": 1},
                    "d": {"type": "integer", "minimum": 1},
                    "mu": {"type": "number", "exclusiveMinimum": 0},
                    "L": {"type": "number", "exclusiveMinimum": 0},
                    "seed": {"type": "integer", "minimum": 0, "default": 0},
                    "sigma": {"type": "number", "minimum": 0, "default": 0},
                    "noise_bound": {"type": ["number", "null"],
                                    "default": None,
                                    "description": "null means 10*sigma"},
                },
            },
        },
        "optimizers": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["method", "T", "gamma"],
                "additionalProperties": False,
                "properties": {
                    "method": {"enum": list(METHODS)},
                    "T": {"type": "integer", "minimum": 0},
                    "gamma": {"type": ["number", "null"],
                              "description": ("null picks the conservative "
                                              "default floor_e / (10 L)")},
                    "scaling": {
                        "type": "object",
                        "default": {"preset": "identity"},
                        "description": ("either {preset, update_prob?, "
                                        "update_every_k?} with preset in "
                                        f"{list(PRESET_NAMES)} or the full "
                                        "form {rule, source, schedule, beta, "
                                        "floor_e, update_prob?, clip_variant?,"
                                        " update_every_k?}"),
                    },
                    "eta": {"type": "number", "minimum": 0, "default": 0},
                    "anchor_prob": {"type": "number", "default": 0.25},
                    "batch": {"type": "integer", "minimum": 1, "default": 1},
                    "averaging": {"enum": list(AVERAGING),
                                  "default": "uniform"},
                    "ema_lambda": {"type": "number", "default": 0.999},
                    "theory_safe": {"type": "boolean", "default": False},
                    "expect_divergence": {"type": "boolean", "default": False},
                    "label": {"type": "string"},
                },
            },
        },
    },
}


# ---------------------------------------------------------------------------
# CLI


def cmd_run(config_path, out=None, err=None):
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        print(f"cannot read {config_path}: {exc}", file=err)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"malformed JSON in {config_path}: line {exc.lineno} "
              f"column {exc.colno}: {exc.msg}", file=err)
        return EXIT_USAGE
    try:
        resolved = resolve_config(doc)
        _, code = run_suite(resolved, echo=lambda *a: print(*a, file=out))
    except ConfigError as exc:
        print(f"config error at {exc.field}: {exc.message}", file=err)
        return EXIT_USAGE
    return code


def cmd_verify(only, seed, out=None, err=None):
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    names = None
    if only:
        names = []
        for item in only:
            names.extend(n for n in item.split(",") if n)
        unknown = [n for n in names if n not in CHECK_ORDER]
        if unknown:
            print(f"unknown check(s) {', '.join(unknown)}; available: "
                  f"{', '.join(CHECK_ORDER)}", file=err)
            return EXIT_USAGE
    print(f"desk-scale checks (seed {seed})", file=out)
    results = run_all(only=names, seed=seed)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.claim}", file=out)
        print(f"{'':<{width}}        measured {r.measured}; bound "
              f"{r.bound}; {r.seconds:.2f}s", file=out)
    failures = [r.name for r in results if not r.passed]
    print(json.dumps({"checks": len(results), "failures": failures}),
          file=out)
    return EXIT_OK if not failures else EXIT_FAILED


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and argv[0] == "--print-schema":
        argv = ["print-schema"] + argv[1:]
    parser = argparse.ArgumentParser(
        prog="saddle-scale",
        description="scaled extragradient benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a suite config")
    p_run.add_argument("config", help="path to the suite JSON")

    p_plot = sub.add_parser("plotdata",
                            help="extract (t, value) lines from a run CSV")
    p_plot.add_argument("csv", help="per-cell CSV produced by run")
    p_plot.add_argument("metric", help="column name, e.g. dist2")
    p_plot.add_argument("--transform", default="none", choices=TRANSFORMS)
    p_plot.add_argument("--stride", type=int, default=1,
                        help="emit every N-th row")

    p_verify = sub.add_parser("verify", help="run the desk-scale check table")
    p_verify.add_argument("--only", action="append", default=None,
                          help="comma-separated check names (repeatable)")
    p_verify.add_argument("--seed", type=int, default=DEFAULT_MASTER_SEED)

    sub.add_parser("print-schema", help="emit the authoritative config schema")

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "plotdata":
        return cmd_plotdata(args.csv, args.metric, transform=args.transform,
                            stride=args.stride)
    if args.command == "verify":
        return cmd_verify(args.only, args.seed)
    print(json.dumps(SCHEMA, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
