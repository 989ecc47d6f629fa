#!/usr/bin/env python3
"""Trajectory throughput: numba kernels vs the pure-numpy fallback.

Runs the same seeded workloads in two subprocesses -- one per backend, so
each pays identical import and warmup costs -- and reports iterations per
second side by side.  The backends compute bit-identical trajectories (see
tests/test_kernels.py); this script only measures speed.

Usage:
    python3 benchmarks/numba_vs_numpy.py [--quick] [--json]
"""

import argparse
import json
import os
import subprocess
import sys
from time import perf_counter

# (label, total dimension d_x + d_y, iterations, method)
WORKLOADS = [
    ("small-extragrad", 8, 20_000, "extragrad"),
    ("medium-extragrad", 100, 5_000, "extragrad"),
    ("large-extragrad", 1_000, 600, "extragrad"),
    ("medium-single-call", 100, 8_000, "single-call-momentum"),
]
QUICK_SCALE = 10  # divide iteration counts by this under --quick


def _measure(workloads):
    """Child mode: time each workload on whichever backend import chose."""
    from saddle_scale._kernels import BACKEND
    from saddle_scale.optim import OptimizerConfig, run
    from saddle_scale.precond import scaling_preset
    from saddle_scale.problems import make_quadratic

    rows = []
    for label, d, T, method in workloads:
        dx = d // 2
        problem = make_quadratic(dx, d - dx, mu=0.5, L=2.0, seed=1, sigma=0.3)
        scaling = scaling_preset("rmsprop", dx, d - dx)
        cfg = OptimizerConfig(method=method, T=T, seed=7, scaling=scaling,
                              gamma=scaling.floor_e / (4.0 * problem.L),
                              batch=4)
        run(problem, OptimizerConfig(method=method, T=50, seed=7,
                                     scaling=scaling, gamma=cfg.gamma,
                                     batch=4))  # warmup: JIT + caches
        best = float("inf")
        for _ in range(3):
            t0 = perf_counter()
            run(problem, cfg)
            best = min(best, perf_counter() - t0)
        rows.append({"label": label, "d": d, "T": T, "method": method,
                     "seconds": best, "iters_per_s": T / best})
    json.dump({"backend": BACKEND, "rows": rows}, sys.stdout)


def _child(disable_numba, workloads):
    env = dict(os.environ)
    env["SADDLE_SCALE_DISABLE_NUMBA"] = "1" if disable_numba else "0"
    out = subprocess.run(
        [sys.executable, __file__, "--measure", json.dumps(workloads)],
        env=env, capture_output=True, text=True)
    if out.returncode != 0:
        sys.stderr.write(out.stderr)
        raise SystemExit(1)
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true",
                    help="scale iteration counts down 10x")
    ap.add_argument("--json", action="store_true",
                    help="emit machine-readable results")
    ap.add_argument("--measure", metavar="SPEC", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)

    if args.measure:
        _measure(json.loads(args.measure))
        return 0

    workloads = [(lab, d, max(T // (QUICK_SCALE if args.quick else 1), 50), m)
                 for lab, d, T, m in WORKLOADS]
    fast = _child(disable_numba=False, workloads=workloads)
    slow = _child(disable_numba=True, workloads=workloads)
    if fast["backend"] == slow["backend"]:
        sys.stderr.write("warning: numba unavailable; comparing numpy to "
                         "itself\n")

    if args.json:
        json.dump({"backends": [fast["backend"], slow["backend"]],
                   "fast": fast["rows"], "fallback": slow["rows"]},
                  sys.stdout, indent=2)
        print()
        return 0

    print(f"{'workload':<20} {'d':>5} {'T':>6} "
          f"{fast['backend'] + ' it/s':>14} {slow['backend'] + ' it/s':>14} "
          f"{'speedup':>8}")
    for f, s in zip(fast["rows"], slow["rows"]):
        print(f"{f['label']:<20} {f['d']:>5} {f['T']:>6} "
              f"{f['iters_per_s']:>14,.0f} {s['iters_per_s']:>14,.0f} "
              f"{f['iters_per_s'] / s['iters_per_s']:>7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
