"""Convergence measures and bound audits for saddle-point runs.

Includes the scaled squared distance R^2 = ||z - z*||^2 weighted by the
clipped diagonal, a restricted duality gap over origin-centered balls (with
a certified trust-region inner solver for quadratics), a per-step
contraction audit for deterministic strongly-monotone runs, log-slope rate
fitting, and the scalar inequality (1 - 1/T)^sqrt(T) <= 1 - 1/(2 sqrt(T)).
"""

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from . import problems as P
from .errors import (
    CapabilityError,
    DimensionMismatchError,
    InvalidParameterError,
    PreconditionError,
)
from .precond import beta_t, gamma_bound, growth_constant

FIT_FLOOR = 1e-300


@dataclass
class RunRecord:
    """Per-iteration metrics for the pre-step iterate z_t, measured with the
    scaling that the step from z_t used.  grad_calls is cumulative through
    the end of iteration t."""

    t: int
    r2_weighted: float
    dist2: float
    grad_norm2: float
    dhat_min: float
    dhat_max: float
    grad_calls: int
    gap: float | None = None


def weighted_dist_sq(z, z_star, scaling):
    """sum_i clipped_i * (z_i - z*_i)^2 over both blocks."""
    if z_star is None:
        raise InvalidParameterError("weighted distance needs a known z_star")
    if z.d_x != z_star.d_x or z.d_y != z_star.d_y:
        raise DimensionMismatchError("z and z_star block sizes differ")
    clipped = np.concatenate([scaling.clipped_x, scaling.clipped_y])
    return float(K.weighted_sq(clipped, z.as_vector(), z_star.as_vector()))


def noise_floor(records, tail_frac=0.2):
    """Plateau estimate: median r2_weighted over the trailing fraction."""
    if not records:
        raise InvalidParameterError("noise_floor needs a non-empty record list")
    k = max(1, math.ceil(tail_frac * len(records)))
    return float(np.median([r.r2_weighted for r in records[-k:]]))


# ---------------------------------------------------------------------------
# restricted gap


def _ball_extremum(M, r, omega):
    """max of r'u - u'Mu/2 over ||u|| <= omega for symmetric M > 0.

    Interior optimum u = M^{-1} r when it fits; otherwise the boundary
    solution u(lam) = (M + lam I)^{-1} r with ||u(lam)|| = omega, found by
    root bracketing (tolerance ~1e-12; M > 0 rules out the degenerate case).
    Returns the optimizer u.
    """
    w, Q = np.linalg.eigh(M)
    c = Q.T @ r

    def norm_at(lam):
        return float(np.sqrt(np.sum((c / (w + lam)) ** 2)))

    if norm_at(0.0) <= omega:
        return Q @ (c / w)
    hi = float(np.linalg.norm(r)) / omega  # ||u(hi)|| <= ||r||/hi = omega
    lam = brentq(lambda t: norm_at(t) - omega, 0.0, hi, xtol=1e-14,
                 rtol=8.9e-16, maxiter=200)
    return Q @ (c / (w + lam))


def _quad_value(p, x, y):
    return float(0.5 * x @ (p.A @ x) + x @ (p.B @ y) - 0.5 * y @ (p.C @ y)
                 + p.a @ x - p.c @ y)


def gap_restricted(problem, z_avg, omega):
    """max_{||y'|| <= omega} f(x_avg, y') - min_{||x'|| <= omega} f(x', y_avg).

    Balls are centered at the origin and must contain the solution for the
    measure to certify convergence.  Bilinear couplings have the closed form
    omega * (||B' x_avg|| + ||B y_avg||); quadratics use the trust-region
    solver above.  Other kinds have no certified inner solver.
    """
    if not omega > 0:
        raise InvalidParameterError("omega must be positive")
    if problem.kind == "minty-example":
        raise CapabilityError("no certified inner solver for this kind")
    if problem.z_star is None:
        raise PreconditionError("restricted gap needs a known z_star")
    zs = problem.z_star
    if (np.linalg.norm(zs.x) > omega + 1e-12
            or np.linalg.norm(zs.y) > omega + 1e-12):
        raise PreconditionError(
            "solution lies outside the restriction balls; increase omega")
    if problem.kind == "bilinear":
        return float(omega * (np.linalg.norm(problem.BT @ z_avg.x)
                              + np.linalg.norm(problem.B @ z_avg.y)))
    # quadratic: inner problems are strictly concave/convex on the ball
    y_best = _ball_extremum(problem.C, problem.BT @ z_avg.x - problem.c, omega)
    x_best = -_ball_extremum(problem.A, problem.B @ z_avg.y + problem.a, omega)
    return _quad_value(problem, z_avg.x, y_best) - _quad_value(
        problem, x_best, z_avg.y)


# ---------------------------------------------------------------------------
# per-step contraction audit


@dataclass
class ContractionReport:
    passed: bool
    checked: int
    first_violation: tuple | None  # (t, lhs, rhs)
    factor_min: float
    factor_max: float

    def to_json(self):
        fv = None
        if self.first_violation is not None:
            t, lhs, rhs = self.first_violation
            fv = {"t": t, "lhs": lhs, "rhs": rhs}
        return json.dumps({
            "passed": self.passed, "checked": self.checked,
            "first_violation": fv, "factor_min": self.factor_min,
            "factor_max": self.factor_max,
        })


def contraction_check(traj, problem, config, region_radius=None):
    """Audit R^2_{t+1} <= (1 - gamma*mu/Gamma + (1 - beta_{t+1}) C) R^2_t
    per recorded step of a deterministic strongly-monotone extragradient run
    (tolerance 1e-10 * R^2_0).

    Gamma comes from gamma_bound when available; for gradient-square
    scalings without a region radius, the run-observed maximum of the
    clipped diagonal is itself a valid weighting bound and is used instead.
    """
    scaling = config.scaling
    if config.method != "extragrad":
        raise PreconditionError("contraction audit covers extragrad runs only")
    if not problem.mu > 0:
        raise PreconditionError("contraction audit needs a strongly "
                                "monotone problem (mu > 0)")
    if problem.sigma != 0:
        raise PreconditionError("contraction audit needs a noise-free run")
    if scaling.update_prob != 1.0:
        raise PreconditionError("contraction audit needs update_prob = 1")
    if config.gamma is None:
        raise InvalidParameterError("contraction audit needs an explicit gamma")
    if scaling.source == "hutchinson" or region_radius is not None:
        cap = gamma_bound(scaling.source, problem, region_radius)
    else:
        cap = max(scaling.floor_e,
                  max((r.dhat_max for r in traj.records), default=scaling.floor_e))
    gamma = config.gamma
    if gamma > scaling.floor_e / (4.0 * problem.L) * (1 + 1e-12):
        raise PreconditionError("step size exceeds floor_e / (4 L)")

    growth_c = growth_constant(scaling, cap)
    records = traj.records
    if len(records) < 2:
        return ContractionReport(True, 0, None, math.nan, math.nan)
    tol = 1e-10 * records[0].r2_weighted
    factors = []
    first = None
    for k in range(len(records) - 1):
        b_next = beta_t(scaling.schedule, scaling.beta, k + 1)
        factor = 1.0 - gamma * problem.mu / cap + (1.0 - b_next) * growth_c
        factors.append(factor)
        lhs = records[k + 1].r2_weighted
        rhs = factor * records[k].r2_weighted + tol
        if lhs > rhs and first is None:
            first = (k, lhs, rhs)
    return ContractionReport(
        passed=first is None, checked=len(records) - 1, first_violation=first,
        factor_min=float(min(factors)), factor_max=float(max(factors)),
    )


# ---------------------------------------------------------------------------
# rate fitting and the scalar inequality


def fit_rate(series, ts=None, mode="linear", burn_in=0.1):
    """Least-squares slope of log(series) against t (``linear``) or against
    log(t) (``loglog``), discarding a leading burn-in fraction.

    Non-positive or sub-1e-300 entries are floored there and flagged with a
    warning so geometric fits on noisy tails stay finite.
    """
    if mode not in ("linear", "loglog"):
        raise InvalidParameterError(f"unknown fit mode {mode!r}")
    vals = np.asarray(series, dtype=np.float64)
    if vals.ndim != 1 or vals.shape[0] < 2:
        raise InvalidParameterError("need at least two values to fit")
    if ts is None:
        xs = np.arange(vals.shape[0], dtype=np.float64)
    else:
        xs = np.asarray(ts, dtype=np.float64)
        if xs.shape != vals.shape:
            raise InvalidParameterError("ts and series lengths differ")
    if mode == "loglog":
        if np.any(xs <= 0):
            raise InvalidParameterError("loglog mode needs positive ts")
        xs = np.log(xs)
    if np.any(vals < FIT_FLOOR):
        warnings.warn("flooring non-positive/tiny values before log fit",
                      RuntimeWarning, stacklevel=2)
        vals = np.maximum(vals, FIT_FLOOR)
    skip = int(burn_in * vals.shape[0])
    xs, vals = xs[skip:], vals[skip:]
    if vals.shape[0] < 2:
        raise InvalidParameterError("burn-in leaves fewer than two points")
    slope = np.polyfit(xs, np.log(vals), 1)[0]
    return float(slope)


def check_scalar_inequality(T):
    """(1 - 1/T)^sqrt(T) <= 1 - 1/(2 sqrt(T)), in double precision."""
    if T < 1:
        raise InvalidParameterError("T must be at least 1")
    root = math.sqrt(T)
    lhs = (1.0 - 1.0 / T) ** root
    rhs = 1.0 - 1.0 / (2.0 * root)
    return lhs <= rhs + 1e-15
