"""Stochastic saddle-point problems min_x max_y f(x, y).

Three generator families, each with a known solution z* where the field
F(z) = (grad_x f, -grad_y f) vanishes:

* quadratic:  f(x,y) = 1/2 x'Ax + x'By - 1/2 y'Cy + a'x - c'y with
  A, C symmetric positive definite (strongly convex-strongly concave),
* bilinear:   f(x,y) = x'By (monotone but not strongly so),
* minty-example: a 1+1 dimensional non-monotone coupling xy + phi(x) - phi(y)
  whose field still satisfies <F(z), z - z*> >= 0 everywhere (certified on a
  grid before the problem is exposed).

Stochasticity is an additive clipped-Gaussian perturbation of the exact
gradient: zero mean, per-coordinate variance sigma^2, hard norm bound
``noise_bound``, scaled by 1/sqrt(batch).  That keeps the variance bound
exact on all of R^d and leaves per-sample Hessians equal to the true ones.
"""

import json
import threading
from dataclasses import dataclass, field as _dc_field

import numpy as np

from . import _kernels as K
from .errors import (
    CapabilityError,
    DimensionMismatchError,
    InvalidParameterError,
    NoUniqueSolutionError,
    NonFiniteError,
    PreconditionError,
)

KINDS = ("quadratic", "bilinear", "minty-example")


def _as_vector(v, name):
    arr = np.ascontiguousarray(np.asarray(v, dtype=np.float64))
    if arr.ndim != 1:
        raise InvalidParameterError(f"{name} must be a 1-d real vector")
    return arr


def _freeze(arr):
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PointPair:
    """A primal-dual iterate z = (x, y).

    Entries must be finite; block lengths are fixed by the owning problem.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _freeze(_as_vector(self.x, "x").copy()))
        object.__setattr__(self, "y", _freeze(_as_vector(self.y, "y").copy()))
        if not (np.isfinite(self.x).all() and np.isfinite(self.y).all()):
            raise NonFiniteError("PointPair entries must be finite")

    @staticmethod
    def _owned(cat, d_x):
        """Internal fast path: wrap a freshly allocated float64 vector that no
        caller retains.  Skips the defensive copy but not the finite check."""
        if not np.isfinite(cat).all():
            raise NonFiniteError("PointPair entries must be finite")
        self = object.__new__(PointPair)
        object.__setattr__(self, "x", _freeze(cat[:d_x]))
        object.__setattr__(self, "y", _freeze(cat[d_x:]))
        object.__setattr__(self, "_cat", _freeze(cat))
        return self

    @property
    def d_x(self):
        return self.x.shape[0]

    @property
    def d_y(self):
        return self.y.shape[0]

    def as_vector(self):
        """Concatenation [x; y]: read-only, cached after the first call."""
        cat = getattr(self, "_cat", None)
        if cat is None:
            cat = _freeze(np.concatenate([self.x, self.y]))
            object.__setattr__(self, "_cat", cat)
        return cat

    @staticmethod
    def from_vector(z, d_x):
        return PointPair(z[:d_x], z[d_x:])


@dataclass(frozen=True)
class FieldValue:
    """Field F(z) = (grad_x f, -grad_y f), or its stochastic estimate.

    ``calls`` counts the gradient-oracle invocations that produced it.
    """

    gx: np.ndarray
    gy_neg: np.ndarray
    calls: int = 1

    def __post_init__(self):
        object.__setattr__(self, "gx", _as_vector(self.gx, "gx"))
        object.__setattr__(self, "gy_neg", _as_vector(self.gy_neg, "gy_neg"))
        if not (np.isfinite(self.gx).all() and np.isfinite(self.gy_neg).all()):
            raise NonFiniteError("FieldValue entries must be finite")
        if self.calls < 0:
            raise InvalidParameterError("calls must be non-negative")

    @staticmethod
    def _owned(cat, d_x, calls):
        """Internal fast path for a freshly computed concatenated value."""
        if not np.isfinite(cat).all():
            raise NonFiniteError("FieldValue entries must be finite")
        self = object.__new__(FieldValue)
        object.__setattr__(self, "gx", cat[:d_x])
        object.__setattr__(self, "gy_neg", cat[d_x:])
        object.__setattr__(self, "calls", calls)
        object.__setattr__(self, "_cat", cat)
        return self

    def as_vector(self):
        cat = getattr(self, "_cat", None)
        if cat is None:
            cat = np.concatenate([self.gx, self.gy_neg])
            object.__setattr__(self, "_cat", cat)
        return cat


@dataclass(frozen=True)
class OracleSample:
    """Identifies one stochastic batch xi: (seed, batch) -> reproducible draw."""

    seed: int
    batch: int = 1

    def __post_init__(self):
        if self.batch < 1:
            raise InvalidParameterError("batch must be a positive integer")
        if self.seed < 0:
            raise InvalidParameterError("seed must be non-negative")


@dataclass(frozen=True, eq=False)
class SaddleProblem:
    """Immutable oracle bundle for one saddle-point instance.

    ``mu`` is the strong-convexity modulus (0 for bilinear/minty), ``L`` a
    certified Lipschitz constant of the field, ``sigma`` the per-coordinate
    noise scale and ``noise_bound`` the hard bound on the noise norm.
    """

    kind: str
    d_x: int
    d_y: int
    mu: float
    L: float
    sigma: float = 0.0
    noise_bound: float = 0.0
    seed: int = 0
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    C: np.ndarray | None = None
    a: np.ndarray | None = None
    c: np.ndarray | None = None
    alpha: float = 0.0
    z_star: PointPair | None = None
    BT: np.ndarray | None = _dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown kind {self.kind!r}")
        if self.d_x < 1 or self.d_y < 1:
            raise InvalidParameterError("dimensions must be positive")
        if self.L <= 0:
            raise InvalidParameterError("L must be positive")
        if self.mu < 0:
            raise InvalidParameterError("mu must be non-negative")
        if self.sigma < 0:
            raise InvalidParameterError("sigma must be non-negative")
        if self.B is not None and self.BT is None:
            object.__setattr__(self, "BT", self.B.T.copy())
        for name in ("A", "B", "C", "BT"):
            m = getattr(self, name)
            if m is not None:
                m = np.ascontiguousarray(np.asarray(m, dtype=np.float64))
                object.__setattr__(self, name, _freeze(m))
        for name in ("a", "c"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _freeze(_as_vector(v, name).copy()))

    # -- convenience constructors -----------------------------------------

    @staticmethod
    def bilinear_from_matrix(B, sigma=0.0, noise_bound=None, seed=0):
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        s = np.linalg.svd(B, compute_uv=False)
        L = float(s.max())
        z_star = None
        if B.shape[0] == B.shape[1] and s.min() > 1e-12 * max(1.0, s.max()):
            z_star = PointPair(np.zeros(B.shape[0]), np.zeros(B.shape[1]))
        return SaddleProblem(
            kind="bilinear", d_x=B.shape[0], d_y=B.shape[1], mu=0.0, L=L,
            sigma=sigma, noise_bound=_default_bound(sigma, noise_bound),
            seed=seed, B=B, z_star=z_star,
        )


def _default_bound(sigma, noise_bound):
    if noise_bound is None:
        return 10.0 * sigma
    if noise_bound < 0:
        raise InvalidParameterError("noise_bound must be non-negative")
    return float(noise_bound)


def _check_z(p, z):
    if z.d_x != p.d_x or z.d_y != p.d_y:
        raise DimensionMismatchError(
            f"iterate has dims ({z.d_x},{z.d_y}), problem wants ({p.d_x},{p.d_y})"
        )


# ---------------------------------------------------------------------------
# low-level evaluations on the concatenated representation (hot path)


_TLS = threading.local()


def _sample_rng(seed):
    """Counter-based generator keyed by ``seed``: draws equal those of
    ``np.random.Generator(np.random.Philox(key=seed))`` but the per-call
    setup is a state reset on a thread-local instance, not a construction
    (sample seeding sits on the hot path of every stochastic oracle call).
    """
    gen = getattr(_TLS, "gen", None)
    if gen is None:
        _TLS.bg = np.random.Philox(key=0)
        _TLS.gen = gen = np.random.Generator(_TLS.bg)
        _TLS.state = _TLS.bg.state
    st = _TLS.state
    lo = seed & 0xFFFFFFFFFFFFFFFF
    st["state"]["key"][0] = lo
    st["state"]["key"][1] = seed >> 64
    st["state"]["counter"][:] = 0
    st["buffer_pos"] = 4
    st["has_uint32"] = 0
    _TLS.bg.state = st
    return gen


def field_into(p, z_cat, out):
    """Deterministic field F(z) written into ``out``; no oracle accounting."""
    if p.kind == "quadratic":
        K.quad_field(p.A, p.B, p.BT, p.C, p.a, p.c, z_cat, out)
    elif p.kind == "bilinear":
        K.bilinear_field(p.B, p.BT, z_cat, out)
    else:
        K.minty_field(z_cat, p.alpha, out)
    return out


def hvp_into(p, z_cat, v_cat, out):
    """Per-block curvature-vector product written into ``out``.

    Convention: the x block carries the Hessian of f in x, the y block the
    Hessian of -f in y (so both blocks are positive for SC quadratics:
    (A v_x, C v_y)).
    """
    if p.kind == "quadratic":
        K.quad_hvp(p.A, p.C, v_cat, out)
    elif p.kind == "bilinear":
        out[:] = 0.0
    else:
        K.minty_hvp(z_cat, p.alpha, v_cat, out)
    return out


def field(p, z):
    """Deterministic field F(z) as a concatenated vector."""
    _check_z(p, z)
    out = np.empty(p.d_x + p.d_y)
    return field_into(p, z.as_vector(), out)


def noise_into(p, s, out):
    """Clipped-Gaussian noise for sample ``s``, written into ``out``.

    Zero mean by symmetry, per-coordinate std sigma before the (rare) norm
    clip at ``noise_bound``, scaled by 1/sqrt(batch).
    """
    if p.sigma == 0.0:
        out[:] = 0.0
        return out
    rng = _sample_rng(s.seed)
    rng.standard_normal(out=out)
    out *= p.sigma
    n = np.sqrt(out @ out)
    if n > p.noise_bound:
        out *= p.noise_bound / n
    out /= np.sqrt(s.batch)
    return out


# ---------------------------------------------------------------------------
# public oracle operations


def gradient(p, z, s):
    """Stochastic gradient oracle: F(z) + noise(s)/sqrt(batch).

    Pure in (p, z, s); increments the call counter by exactly 1.
    """
    _check_z(p, z)
    d = p.d_x + p.d_y
    g = np.empty(d)
    field_into(p, z.as_vector(), g)
    if p.sigma > 0.0:
        zeta = np.empty(d)
        noise_into(p, s, zeta)
        g += zeta
    return FieldValue._owned(g, p.d_x, calls=1)


def hvp(p, z, v_x, v_y, s):
    """Hessian-vector product per block: (A v_x, C v_y) for quadratics,
    zeros for bilinear, analytic second derivatives for the minty example.

    Exact (sample-independent) under the additive noise model; ``s`` is kept
    in the signature for oracle-interface uniformity.  Counts on a separate
    hvp counter owned by the optimizer, not here.
    """
    _check_z(p, z)
    v_x = _as_vector(v_x, "v_x")
    v_y = _as_vector(v_y, "v_y")
    if v_x.shape[0] != p.d_x or v_y.shape[0] != p.d_y:
        raise DimensionMismatchError("hvp vector lengths do not match problem dims")
    out = np.empty(p.d_x + p.d_y)
    hvp_into(p, z.as_vector(), np.concatenate([v_x, v_y]), out)
    return out[: p.d_x], out[p.d_x :]


def solve_exact(p):
    """Solve the stationarity system A x + B y + a = 0, -B'x + C y + c = 0."""
    if p.kind == "quadratic":
        dx, dy = p.d_x, p.d_y
        M = np.zeros((dx + dy, dx + dy))
        M[:dx, :dx] = p.A
        M[:dx, dx:] = p.B
        M[dx:, :dx] = -p.BT
        M[dx:, dx:] = p.C
        rhs = -np.concatenate([p.a, p.c])
        try:
            z = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError as exc:
            raise NoUniqueSolutionError("stationarity system is singular") from exc
        res = M @ z - rhs
        if np.linalg.norm(res) > 1e-10 * max(1.0, np.linalg.norm(rhs)):
            raise NoUniqueSolutionError("stationarity solve did not converge")
        return PointPair(z[:dx], z[dx:])
    if p.kind == "bilinear":
        if p.d_x != p.d_y:
            raise NoUniqueSolutionError("bilinear system must be square")
        s = np.linalg.svd(p.B, compute_uv=False)
        if s.min() <= 1e-12 * max(1.0, s.max()):
            raise NoUniqueSolutionError("bilinear coupling matrix is singular")
        return PointPair(np.zeros(p.d_x), np.zeros(p.d_y))
    raise CapabilityError("solve_exact supports quadratic and bilinear kinds")


def verify_minty(p, radius, grid_n):
    """Check <F(z), z - z*> >= -1e-12 on a uniform grid_n x grid_n grid
    over the radius-box around z*.  Only 1+1 dimensional problems qualify
    for exhaustive grid certification.
    """
    if p.z_star is None:
        raise PreconditionError("verify_minty needs a problem with known z_star")
    if grid_n < 2:
        raise InvalidParameterError("grid_n must be at least 2")
    if p.d_x != 1 or p.d_y != 1:
        raise CapabilityError("grid certification requires d_x = d_y = 1")
    xs = np.linspace(p.z_star.x[0] - radius, p.z_star.x[0] + radius, grid_n)
    ys = np.linspace(p.z_star.y[0] - radius, p.z_star.y[0] + radius, grid_n)
    X, Y = np.meshgrid(xs, ys)
    if p.kind == "quadratic":
        A, B, C = p.A[0, 0], p.B[0, 0], p.C[0, 0]
        a, c = p.a[0], p.c[0]
        FX = A * X + B * Y + a
        FY = C * Y - B * X + c
    elif p.kind == "bilinear":
        B = p.B[0, 0]
        FX = B * Y
        FY = -B * X
    else:
        FX = Y + X + p.alpha * np.sin(X)
        FY = -X + Y + p.alpha * np.sin(Y)
    inner = FX * (X - p.z_star.x[0]) + FY * (Y - p.z_star.y[0])
    return bool(inner.min() >= -1e-12)


# ---------------------------------------------------------------------------
# generators


def quadratic_from_matrices(A, B, C, a, c, sigma=0.0, noise_bound=None,
                            seed=0, require_sc=True):
    """Build a quadratic problem from explicit matrices.

    With ``require_sc`` the blocks must be symmetric with positive spectra
    (checked); ``require_sc=False`` skips the definiteness check and stores
    mu = 0, for deliberately adversarial instances.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    a = _as_vector(a, "a")
    c = _as_vector(c, "c")
    dx, dy = A.shape[0], C.shape[0]
    if B.shape != (dx, dy) or a.shape[0] != dx or c.shape[0] != dy:
        raise DimensionMismatchError("block shapes are inconsistent")
    for name, M in (("A", A), ("C", C)):
        if not np.allclose(M, M.T, atol=1e-10 * max(1.0, np.abs(M).max())):
            raise InvalidParameterError(f"{name} must be symmetric")
    wA = np.linalg.eigvalsh(A)
    wC = np.linalg.eigvalsh(C)
    mu = float(min(wA.min(), wC.min()))
    if require_sc:
        if mu <= 0:
            raise InvalidParameterError("A and C must be positive definite")
    else:
        mu = max(0.0, mu)
    J = np.block([[A, B], [-B.T, C]])
    L = float(np.linalg.svd(J, compute_uv=False).max())
    prob = SaddleProblem(
        kind="quadratic", d_x=dx, d_y=dy, mu=mu, L=L, sigma=sigma,
        noise_bound=_default_bound(sigma, noise_bound), seed=seed,
        A=A, B=B, C=C, a=a, c=c,
    )
    z_star = None
    try:
        z_star = solve_exact(prob)
    except NoUniqueSolutionError:
        pass
    if z_star is None:
        return prob
    return SaddleProblem(
        kind="quadratic", d_x=dx, d_y=dy, mu=prob.mu, L=L, sigma=sigma,
        noise_bound=prob.noise_bound, seed=seed, A=A, B=B, C=C, a=a, c=c,
        z_star=z_star,
    )


def _random_orthogonal(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def _spd_with_spectrum(rng, eigs):
    d = eigs.shape[0]
    Q = _random_orthogonal(rng, d)
    M = (Q * eigs) @ Q.T
    return (M + M.T) / 2.0


def _log_uniform(rng, lo, hi, n):
    if n <= 0:
        return np.empty(0)
    if hi <= lo:
        return np.full(n, lo)
    return np.exp(rng.uniform(np.log(lo), np.log(hi), n))


def make_quadratic(d_x, d_y, mu, L, seed, sigma=0.0, noise_bound=None):
    """Random strongly convex-strongly concave quadratic.

    Spectra of A and C are log-uniform in [mu, L_A] with the endpoints
    pinned (L_A = max(mu, L/2)); B's singular values are uniform in
    [0, min(L/2, L - L_A)] so the field is certified L-Lipschitz and
    exactly mu-strongly monotone.  z_star is attached via solve_exact.
    """
    if d_x < 1 or d_y < 1:
        raise InvalidParameterError("dimensions must be positive")
    if not (0 < mu <= L):
        raise InvalidParameterError("need 0 < mu <= L")
    rng = np.random.default_rng(seed)
    L_A = max(mu, L / 2.0)
    s_B = min(L / 2.0, L - L_A)

    def block_eigs(d):
        if d == 1:
            return np.array([L_A])
        return np.concatenate([[mu, L_A], _log_uniform(rng, mu, L_A, d - 2)])

    A = _spd_with_spectrum(rng, block_eigs(d_x))
    C = _spd_with_spectrum(rng, block_eigs(d_y))
    d_min = min(d_x, d_y)
    U = _random_orthogonal(rng, d_x)[:, :d_min]
    V = _random_orthogonal(rng, d_y)[:, :d_min]
    svals = rng.uniform(0.0, s_B, d_min) if s_B > 0 else np.zeros(d_min)
    B = (U * svals) @ V.T
    a = rng.standard_normal(d_x)
    c = rng.standard_normal(d_y)

    prob = SaddleProblem(
        kind="quadratic", d_x=d_x, d_y=d_y, mu=float(mu), L=float(L),
        sigma=sigma, noise_bound=_default_bound(sigma, noise_bound),
        seed=seed, A=A, B=B, C=C, a=a, c=c,
    )
    z_star = solve_exact(prob)
    return SaddleProblem(
        kind="quadratic", d_x=d_x, d_y=d_y, mu=float(mu), L=float(L),
        sigma=sigma, noise_bound=prob.noise_bound, seed=seed,
        A=A, B=B, C=C, a=a, c=c, z_star=z_star,
    )


def make_bilinear(d, L, seed, sigma=0.0, noise_bound=None):
    """Bilinear coupling f(x,y) = x'By with the top singular value pinned
    to L and the rest uniform in [L/4, L] (nonsingular, so z* = 0)."""
    if d < 1:
        raise InvalidParameterError("d must be positive")
    if L <= 0:
        raise InvalidParameterError("L must be positive")
    rng = np.random.default_rng(seed)
    if d == 1:
        B = np.array([[float(L)]])
    else:
        svals = np.concatenate([[L], rng.uniform(L / 4.0, L, d - 1)])
        U = _random_orthogonal(rng, d)
        V = _random_orthogonal(rng, d)
        B = (U * svals) @ V.T
    return SaddleProblem(
        kind="bilinear", d_x=d, d_y=d, mu=0.0, L=float(L), sigma=sigma,
        noise_bound=_default_bound(sigma, noise_bound), seed=seed, B=B,
        z_star=PointPair(np.zeros(d), np.zeros(d)),
    )


def make_minty(seed, sigma=0.0, noise_bound=None):
    """Non-monotone 1+1 example f(x,y) = xy + phi(x) - phi(y) with
    phi'(u) = u + alpha*sin(u), alpha in [1.5, 2).

    The coupling term cancels in <F(z), z>, leaving
    x^2 + alpha*x*sin(x) + y^2 + alpha*y*sin(y) >= 0, so the minty
    inequality holds globally while the x-block curvature 1 + alpha*cos(x)
    goes negative (non-monotone).  Certified on a grid before returning.
    """
    rng = np.random.default_rng(seed)
    alpha = 1.5 + 0.5 * rng.random()
    prob = SaddleProblem(
        kind="minty-example", d_x=1, d_y=1, mu=0.0, L=float(2.0 + alpha),
        sigma=sigma, noise_bound=_default_bound(sigma, noise_bound),
        seed=seed, alpha=float(alpha),
        z_star=PointPair(np.zeros(1), np.zeros(1)),
    )
    if not verify_minty(prob, radius=10.0, grid_n=1001):
        raise AssertionError("internal error: minty candidate failed certification")
    return prob


# ---------------------------------------------------------------------------
# serialization


def problem_to_dict(p):
    doc = {
        "kind": p.kind, "d_x": p.d_x, "d_y": p.d_y,
        "mu": p.mu, "L": p.L, "sigma": p.sigma,
        "noise_bound": p.noise_bound, "seed": p.seed,
    }
    for name in ("A", "B", "C"):
        m = getattr(p, name)
        if m is not None:
            doc[name] = m.tolist()  # row-major
    for name in ("a", "c"):
        v = getattr(p, name)
        if v is not None:
            doc[name] = v.tolist()
    if p.kind == "minty-example":
        doc["alpha"] = p.alpha
    if p.z_star is not None:
        doc["z_star"] = {"x": p.z_star.x.tolist(), "y": p.z_star.y.tolist()}
    return doc


def problem_from_dict(doc):
    kw = {}
    for name in ("A", "B", "C"):
        if name in doc:
            kw[name] = np.asarray(doc[name], dtype=np.float64)
    for name in ("a", "c"):
        if name in doc:
            kw[name] = np.asarray(doc[name], dtype=np.float64)
    z_star = None
    if "z_star" in doc:
        z_star = PointPair(np.asarray(doc["z_star"]["x"]),
                           np.asarray(doc["z_star"]["y"]))
    return SaddleProblem(
        kind=doc["kind"], d_x=doc["d_x"], d_y=doc["d_y"], mu=doc["mu"],
        L=doc["L"], sigma=doc.get("sigma", 0.0),
        noise_bound=doc.get("noise_bound", 0.0), seed=doc.get("seed", 0),
        alpha=doc.get("alpha", 0.0), z_star=z_star, **kw,
    )


def problem_to_json(p):
    return json.dumps(problem_to_dict(p))


def problem_from_json(text):
    return problem_from_dict(json.loads(text))
