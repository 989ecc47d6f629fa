"""Desk-scale verification suite.

Each check exercises one promised property of the library end to end —
clipping ranges, per-update growth bounds, deterministic contraction,
average-iterate rates, oracle accounting, estimator unbiasedness — at sizes
that finish in seconds.  The registry backs both the ``verify`` CLI
subcommand and the acceptance test suite; the checks and their tolerances
are the contract, so nothing here adapts to the data.
"""

import dataclasses
import math
from dataclasses import dataclass
from itertools import product
from time import perf_counter

import numpy as np

from .errors import InvalidParameterError
from .metrics import (
    check_scalar_inequality,
    contraction_check,
    fit_rate,
    gap_restricted,
    noise_floor,
)
from .optim import (
    OptimizerConfig,
    RunStreams,
    run,
    step_extragrad,
    step_single_call,
    warm_start_single_call,
)
from .precond import (
    ScalingState,
    beta_t,
    curvature_hutchinson,
    gamma_bound,
    growth_constant,
    hutchinson_probe,
    scaling_preset,
)
from .problems import (
    OracleSample,
    PointPair,
    SaddleProblem,
    make_bilinear,
    make_minty,
    make_quadratic,
    quadratic_from_matrices,
)


@dataclass
class CheckResult:
    name: str
    claim: str
    passed: bool
    measured: str
    bound: str
    seconds: float

    def row(self):
        status = "pass" if self.passed else "FAIL"
        return (f"{self.name:<22} {status:<5} {self.measured} "
                f"(bound: {self.bound}) [{self.seconds:.2f}s]")


_CHECKS = {}
CHECK_ORDER = []


def _register(name, claim):
    def wrap(fn):
        _CHECKS[name] = (claim, fn)
        CHECK_ORDER.append(name)
        return fn
    return wrap


def check_names():
    return list(CHECK_ORDER)


def run_check(name, seed=42):
    if name not in _CHECKS:
        raise InvalidParameterError(
            f"unknown check {name!r}; available: {', '.join(CHECK_ORDER)}")
    claim, fn = _CHECKS[name]
    _warm_kernels()  # first call pays the JIT compile, outside the timing
    t0 = perf_counter()
    passed, measured, bound = fn(seed)
    return CheckResult(name=name, claim=claim, passed=bool(passed),
                       measured=measured, bound=bound,
                       seconds=perf_counter() - t0)


def run_all(only=None, seed=42):
    names = only if only else CHECK_ORDER
    return [run_check(n, seed=seed) for n in names]


# ---------------------------------------------------------------------------
# shared fixtures


_RANGE_CACHE = {}
_WARMED = False


def _warm_kernels():
    """Trigger JIT compilation outside any timed section."""
    global _WARMED
    if _WARMED:
        return
    problem = make_quadratic(2, 2, mu=0.5, L=2.0, seed=9, sigma=0.5)
    for preset in ("rmsprop", "oasis"):
        run(problem, OptimizerConfig(
            method="extragrad", T=20, seed=0,
            scaling=scaling_preset(preset, 2, 2), gamma=1e-6, batch=2))
    _WARMED = True


def _preset_runs(seed):
    """One traced run per preset on a noisy SC quadratic (total dimension
    20).  Descent-ascent drives the trajectory: the clipping audit concerns
    the scaling updates, which fire once per iteration for every method,
    and the single oracle call per step keeps the suite fast."""
    key = ("presets", seed)
    if key not in _RANGE_CACHE:
        problem = make_quadratic(10, 10, mu=1.0, L=2.0, seed=101, sigma=0.5)
        out = []
        for preset in ("adam", "rmsprop", "adahessian", "oasis"):
            scaling = scaling_preset(preset, 10, 10)
            cfg = OptimizerConfig(
                method="sgda", T=10_000, seed=seed, scaling=scaling,
                gamma=scaling.floor_e / (4.0 * problem.L), batch=8,
                trace_scaling=True)
            out.append((preset, problem, run(problem, cfg)))
        _RANGE_CACHE[key] = out
    return _RANGE_CACHE[key]


def _skip_run(seed):
    """A probabilistic-update run so the skipped branch is actually hit."""
    key = ("skip", seed)
    if key not in _RANGE_CACHE:
        problem = make_quadratic(10, 10, mu=1.0, L=2.0, seed=101, sigma=0.5)
        scaling = scaling_preset("oasis", 10, 10, update_prob=0.3)
        cfg = OptimizerConfig(
            method="sgda", T=10_000, seed=seed + 1, scaling=scaling,
            gamma=scaling.floor_e / (4.0 * problem.L), batch=8,
            trace_scaling=True)
        _RANGE_CACHE[key] = ("oasis-p0.3", problem, run(problem, cfg))
    return _RANGE_CACHE[key]


def _cap_for(problem, traj, scaling):
    """Certified curvature bound for one finished run: dimension-scaled L
    for Rademacher probes, or the gradient bound over the smallest
    origin-of-z* ball that provably contains every visited iterate."""
    if scaling.source == "hutchinson":
        return gamma_bound("hutchinson", problem)
    radius = math.sqrt(max(r.dist2 for r in traj.records)) * (1 + 1e-9)
    return gamma_bound("grad-square", problem, region_radius=radius)


# ---------------------------------------------------------------------------
# the checks


@_register("scaling-range",
           "clipped diagonal entries stay in [e, Gamma] across 1e4-step runs "
           "of all four presets")
def _check_scaling_range(seed):
    runs = _preset_runs(seed)
    violations = 0
    worst = 0.0
    for _, problem, traj in runs:
        scaling = traj.config.scaling
        cap = _cap_for(problem, traj, scaling)
        e = scaling.floor_e
        entries = np.hstack([
            np.array([s.clipped_x for s in traj.scaling_trace]),
            np.array([s.clipped_y for s in traj.scaling_trace])])
        bad = (entries < e).any(axis=1) | (entries > cap).any(axis=1)
        violations += int(np.count_nonzero(bad))
        worst = max(worst, float(entries.max()) / cap)
    return (violations == 0,
            f"violations={violations}, max Dhat/Gamma={worst:.3f}",
            "0 violations over 4x1e4 updates")


@_register("scaling-growth",
           "every fired update grows clipped entries by at most "
           "1 + (1-beta_t) C; skipped updates never grow them")
def _check_scaling_growth(seed):
    runs = _preset_runs(seed) + [_skip_run(seed)]
    violations = 0
    checked = 0
    for _, problem, traj in runs:
        scaling = traj.config.scaling
        cap = _cap_for(problem, traj, scaling)
        c_full = growth_constant(
            dataclasses.replace(scaling, update_prob=1.0, update_every_k=None),
            cap)
        trace = traj.scaling_trace
        for k in range(len(trace) - 1):
            prev, cur = trace[k], trace[k + 1]
            checked += 1
            if cur.fired:
                factor = 1.0 + (1.0 - beta_t(scaling.schedule, scaling.beta,
                                             k + 1)) * c_full
                ok = (np.all(cur.clipped_x <= factor * prev.clipped_x + 1e-12)
                      and np.all(cur.clipped_y <= factor * prev.clipped_y + 1e-12))
            else:
                ok = (np.all(cur.clipped_x <= prev.clipped_x)
                      and np.all(cur.clipped_y <= prev.clipped_y))
            if not ok:
                violations += 1
    return (violations == 0,
            f"violations={violations} over {checked} steps",
            "0 violations")


@_register("sc-contraction",
           "noise-free strongly-monotone extragradient runs satisfy the "
           "per-step weighted contraction and land at 1e-16 of the start")
def _check_sc_contraction(seed):
    worst_ratio = 0.0
    T = 3000
    budget = None
    for s in range(5):
        problem = make_quadratic(10, 10, mu=1.0, L=2.0, seed=301 + s)
        cap = gamma_bound("hutchinson", problem)
        e = 0.01
        gamma = e / (4.0 * problem.L)
        c_growth = 2.0 * cap / e  # additive rule, p = 1
        beta = max(0.999, 1.0 - gamma * problem.mu / (2.0 * cap * c_growth))
        scaling = ScalingState.create(
            rule="additive-ema", source="hutchinson", schedule="constant-beta",
            beta=beta, floor_e=e, update_prob=1.0, d_x=10, d_y=10)
        budget = math.ceil(40.0 * cap / (gamma * problem.mu))
        assert T <= budget
        cfg = OptimizerConfig(method="extragrad", T=T, seed=seed + s,
                              scaling=scaling, gamma=gamma)
        traj = run(problem, cfg)
        rep = contraction_check(traj, problem, cfg)
        if not rep.passed:
            return (False, f"per-step violation at t={rep.first_violation[0]}",
                    "no violations")
        d0 = traj.records[0].dist2
        final = traj.final_z.as_vector() - problem.z_star.as_vector()
        ratio = float(final @ final) / d0
        worst_ratio = max(worst_ratio, ratio)
    return (worst_ratio <= 1e-16,
            f"worst final dist2/start={worst_ratio:.2e} within T={T} "
            f"(budget {budget})",
            "<= 1e-16")


@_register("monotone-average-rate",
           "restricted gap of the uniform average decays like 1/T on a "
           "bilinear game (log-log slope -1 +- 0.15)")
def _check_monotone_rate(seed):
    problem = make_bilinear(5, L=2.0, seed=202)
    scaling = scaling_preset("oasis", 5, 5)
    gamma = scaling.floor_e / (2.0 * problem.L)
    horizons = [100, 1000, 10_000, 100_000]
    gaps = []
    for T in horizons:
        cfg = OptimizerConfig(method="extragrad", T=T, seed=seed,
                              scaling=scaling, gamma=gamma)
        traj = run(problem, cfg)
        gaps.append(gap_restricted(problem, traj.final_avg_uniform, 1.0))
    slope = fit_rate(gaps, ts=horizons, mode="loglog", burn_in=0.0)
    return (-1.15 <= slope <= -0.85,
            f"slope={slope:.3f}, gaps={['%.2e' % g for g in gaps]}",
            "slope in [-1.15, -0.85]")


@_register("divergence-split",
           "on f = xy, descent-ascent multiplies ||z||^2 by exactly "
           "1 + gamma^2 per step while extragradient shrinks it")
def _check_divergence_split(seed):
    problem = SaddleProblem.bilinear_from_matrix(np.array([[1.0]]))
    z0 = PointPair([1.0], [1.0])
    scaling = scaling_preset("identity", 1, 1)
    sgda = run(problem, OptimizerConfig(
        method="sgda", T=100, seed=seed, scaling=scaling, gamma=0.1, z0=z0))
    grew = sgda.final_z.as_vector()
    measured = float(grew @ grew)
    predicted = 1.01**100 * 2.0
    rel = abs(measured - predicted) / predicted
    eg = run(problem, OptimizerConfig(
        method="extragrad", T=100, seed=seed, scaling=scaling, gamma=0.1,
        z0=z0))
    dists = [r.dist2 for r in eg.records]
    monotone = all(b < a for a, b in zip(dists, dists[1:]))
    return (rel <= 1e-10 and monotone,
            f"growth rel err={rel:.2e}, extragrad monotone={monotone}",
            "rel err <= 1e-10 and strictly decreasing")


@_register("noise-floor-halving",
           "halving the step size roughly halves the stochastic plateau "
           "(ratio within [0.3, 0.8] over 5 seeds)")
def _check_noise_floor(seed):
    problem = make_quadratic(10, 10, mu=1.0, L=2.0, seed=303, sigma=1.0)
    scaling = scaling_preset("oasis", 10, 10)
    gamma = scaling.floor_e / (4.0 * problem.L)
    ratios = []
    for s in range(5):
        plateaus = {}
        for g in (gamma, gamma / 2.0):
            cfg = OptimizerConfig(method="extragrad", T=12_000, seed=seed + s,
                                  scaling=scaling, gamma=g, batch=16)
            plateaus[g] = noise_floor(run(problem, cfg).records)
        ratios.append(plateaus[gamma / 2.0] / plateaus[gamma])
    mean_ratio = float(np.mean(ratios))
    return (0.3 <= mean_ratio <= 0.8,
            f"mean plateau ratio={mean_ratio:.3f} "
            f"(per seed: {['%.2f' % r for r in ratios]})",
            "in [0.3, 0.8]")


@_register("call-accounting",
           "gradient calls are exactly 2T (extragradient) and T+1 "
           "(single-call); single-call iterations cost < 0.65x wall-clock")
def _check_call_accounting(seed):
    small = make_quadratic(4, 4, mu=0.5, L=2.0, seed=404)
    scaling = scaling_preset("rmsprop", 4, 4)
    eg = run(small, OptimizerConfig(method="extragrad", T=1000, seed=seed,
                                    scaling=scaling, gamma=1e-4))
    sc = run(small, OptimizerConfig(method="single-call-momentum", T=1000,
                                    seed=seed, scaling=scaling, gamma=1e-4))
    counts_ok = eg.grad_calls == 2000 and sc.grad_calls == 1001

    big = make_quadratic(500, 500, mu=0.5, L=2.0, seed=505)
    big_scaling = scaling_preset("rmsprop", 500, 500)
    streams = RunStreams.from_seed(seed)
    z0 = PointPair(streams.init.standard_normal(500),
                   streams.init.standard_normal(500))
    gamma = 1e-6

    def eg_loop(iters):
        z, s = z0, big_scaling.spawn(500, 500)
        for _ in range(iters):
            z, _, s = step_extragrad(big, z, s, gamma, streams)

    def sc_loop(iters):
        z, s = z0, big_scaling.spawn(500, 500)
        cache = warm_start_single_call(big, z, streams)
        w = z
        for _ in range(iters):
            z, _, w, cache, s = step_single_call(
                big, z, w, cache, s, gamma, 0.0, 0.25, streams)

    def best_time(fn, iters=150, reps=3):
        fn(10)  # warm caches
        best = math.inf
        for _ in range(reps):
            t0 = perf_counter()
            fn(iters)
            best = min(best, perf_counter() - t0)
        return best / iters

    t_eg = best_time(eg_loop)
    t_sc = best_time(sc_loop)
    ratio = t_sc / t_eg
    return (counts_ok and ratio < 0.65,
            f"calls eg={eg.grad_calls} sc={sc.grad_calls}, "
            f"per-iter {t_sc * 1e6:.0f}us vs {t_eg * 1e6:.0f}us, "
            f"ratio={ratio:.3f}",
            "2000 / 1001 and ratio < 0.65")


@_register("hutchinson-unbiased",
           "the Rademacher diagonal probe matches diag(A): exact under "
           "full enumeration, within 3 standard errors over 1e5 draws")
def _check_hutchinson(seed):
    rng = np.random.default_rng(606)
    M = rng.standard_normal((5, 5))
    A = M @ M.T + 5.0 * np.eye(5)
    problem = quadratic_from_matrices(A, np.zeros((5, 5)), np.eye(5),
                                      np.zeros(5), np.zeros(5))
    z = PointPair(np.zeros(5), np.zeros(5))
    sample = OracleSample(seed=0)

    acc = np.zeros(5)
    for signs in product([-1.0, 1.0], repeat=5):
        acc += hutchinson_probe(problem, z, np.array(signs), np.ones(5),
                                sample).hx
    enum_err = float(np.abs(acc / 32.0 - np.diag(A)).max())

    stream = np.random.default_rng(seed)
    n = 100_000
    draws = np.empty((n, 5))
    for i in range(n):
        draws[i] = curvature_hutchinson(problem, z, sample, stream).hx
    se = draws.std(axis=0, ddof=1) / math.sqrt(n)
    dev = np.abs(draws.mean(axis=0) - np.diag(A))
    z_scores = dev / se
    return (enum_err <= 1e-12 and np.all(dev <= 3.0 * se),
            f"enumeration err={enum_err:.1e}, max |mean-diag|/SE="
            f"{z_scores.max():.2f}",
            "1e-12 and 3 SE")


@_register("scalar-inequality",
           "(1 - 1/T)^sqrt(T) <= 1 - 1/(2 sqrt(T)) on a 1e4-point "
           "log-spaced sweep of [1, 1e6]")
def _check_scalar_inequality(seed):
    ts = np.unique(np.round(np.logspace(0, 6, 10_000)).astype(int))
    failures = [int(T) for T in ts if not check_scalar_inequality(int(T))]
    return (not failures,
            f"{len(ts)} distinct T checked, {len(failures)} failures",
            "0 failures")


@_register("nonmonotone-trend",
           "on the certified non-monotone problem the best-so-far squared "
           "field norm falls with log-log slope <= -0.7")
def _check_nonmonotone_trend(seed):
    problem = make_minty(seed=5, sigma=0.1)
    scaling = scaling_preset("oasis", 1, 1)
    gamma = 2e-4
    assert gamma <= scaling.floor_e / (3.0 * problem.L)
    cfg = OptimizerConfig(method="extragrad", T=100_000, seed=seed,
                          scaling=scaling, gamma=gamma, batch=10_000)
    traj = run(problem, cfg)
    checkpoints = [1000, 10_000, 100_000]
    mins = []
    best = math.inf
    next_cp = 0
    for r in traj.records:
        best = min(best, r.grad_norm2)
        if r.t + 1 == checkpoints[next_cp]:
            mins.append(best)
            next_cp += 1
            if next_cp == len(checkpoints):
                break
    slope = fit_rate(mins, ts=checkpoints, mode="loglog", burn_in=0.0)
    return (slope <= -0.7,
            f"slope={slope:.2f}, best grad_norm2={['%.1e' % m for m in mins]}",
            "slope <= -0.7")


@_register("momentum-parity",
           "negative momentum at eta = e*p, p = 1/4 reaches the 1e-12 "
           "ball within 2x the plain single-call iterations")
def _check_momentum_parity(seed):
    problem = make_quadratic(10, 10, mu=0.5, L=2.0, seed=808)
    scaling = scaling_preset("oasis", 10, 10)
    e = scaling.floor_e
    gamma = e / (10.0 * problem.L)
    T = 150_000

    def first_hit(eta):
        cfg = OptimizerConfig(
            method="single-call-momentum", T=T, seed=seed, scaling=scaling,
            gamma=gamma, eta=eta, anchor_prob=0.25, theory_safe=True)
        state = {"target": None, "hit": None}

        def watch(chunk):
            if state["target"] is None:
                state["target"] = 1e-12 * chunk[0].dist2
            for r in chunk:
                if state["hit"] is None and r.dist2 <= state["target"]:
                    state["hit"] = r.t
        run(problem, cfg, on_records=watch)
        return state["hit"]

    plain = first_hit(0.0)
    momentum = first_hit(e * 0.25)
    ok = plain is not None and momentum is not None and momentum <= 2 * plain
    return (ok,
            f"first hit: eta=0 at t={plain}, eta=e/4 at t={momentum}",
            "momentum <= 2x plain, both within budget")
