"""Numerical kernels, with an optional numba fast path.

Every kernel has a single pure-numpy definition.  When numba is importable
and ``SADDLE_SCALE_DISABLE_NUMBA`` is unset (or falsy), the same definitions
are compiled with ``@njit``; otherwise the plain-numpy versions are used.
Both paths implement identical arithmetic in identical order.

All kernels work on the concatenated representation ``z = [x; y]`` of an
iterate and write into caller-owned output buffers, so the per-iteration
hot loops allocate nothing.
"""

import os

import numpy as np


def _numba_requested():
    flag = os.environ.get("SADDLE_SCALE_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


HAS_NUMBA = False
if _numba_requested():
    try:
        from numba import njit as _njit

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - depends on environment
        HAS_NUMBA = False

#: Which implementation backs the public kernel names: "numba" or "numpy".
BACKEND = "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# field evaluations F(z) = (grad_x f, -grad_y f)


def _quad_field(A, B, BT, C, a, c, z, out):
    dx = A.shape[0]
    x = z[:dx]
    y = z[dx:]
    out[:dx] = np.dot(A, x) + np.dot(B, y) + a
    out[dx:] = np.dot(C, y) - np.dot(BT, x) + c
    return out


def _bilinear_field(B, BT, z, out):
    dx = B.shape[0]
    x = z[:dx]
    y = z[dx:]
    out[:dx] = np.dot(B, y)
    out[dx:] = -np.dot(BT, x)
    return out


def _minty_field(z, alpha, out):
    # f(x, y) = x*y + phi(x) - phi(y) with phi'(u) = u + alpha*sin(u)
    out[0] = z[1] + z[0] + alpha * np.sin(z[0])
    out[1] = -z[0] + z[1] + alpha * np.sin(z[1])
    return out


# ---------------------------------------------------------------------------
# Hessian-vector products (per-block curvature, saddle convention: the
# y block reports the curvature of -f, i.e. C for the quadratic form)


def _quad_hvp(A, C, v, out):
    dx = A.shape[0]
    out[:dx] = np.dot(A, v[:dx])
    out[dx:] = np.dot(C, v[dx:])
    return out


def _minty_hvp(z, alpha, v, out):
    out[0] = (1.0 + alpha * np.cos(z[0])) * v[0]
    out[1] = (1.0 + alpha * np.cos(z[1])) * v[1]
    return out


# ---------------------------------------------------------------------------
# preconditioner state updates


def _ema_update(raw, h, beta):
    raw[:] = beta * raw + (1.0 - beta) * h
    return raw


def _clip_from_sq(raw_sq, floor_e, add_variant, out):
    d = np.sqrt(raw_sq)
    if add_variant:
        out[:] = d + floor_e
    else:
        out[:] = np.maximum(floor_e, d)
    return out


def _clip_from_abs(raw, floor_e, add_variant, out):
    d = np.abs(raw)
    if add_variant:
        out[:] = d + floor_e
    else:
        out[:] = np.maximum(floor_e, d)
    return out


# ---------------------------------------------------------------------------
# iterate updates


def _step_scaled(z, g, clipped, gamma, out):
    out[:] = z - gamma * (g / clipped)
    return out


def _step_anchored(z, w, g, clipped, gamma, eta, out):
    out[:] = z + eta * ((w - z) / clipped) - gamma * (g / clipped)
    return out


def _weighted_sq(clipped, z, z_star):
    dz = z - z_star
    return float(np.dot(clipped * dz, dz))


def _sq_norm(v):
    return float(np.dot(v, v))


_PY_IMPLS = {
    "quad_field": _quad_field,
    "bilinear_field": _bilinear_field,
    "minty_field": _minty_field,
    "quad_hvp": _quad_hvp,
    "minty_hvp": _minty_hvp,
    "ema_update": _ema_update,
    "clip_from_sq": _clip_from_sq,
    "clip_from_abs": _clip_from_abs,
    "step_scaled": _step_scaled,
    "step_anchored": _step_anchored,
    "weighted_sq": _weighted_sq,
    "sq_norm": _sq_norm,
}

if HAS_NUMBA:
    _IMPLS = {name: _njit(cache=True)(fn) for name, fn in _PY_IMPLS.items()}
else:
    _IMPLS = dict(_PY_IMPLS)

quad_field = _IMPLS["quad_field"]
bilinear_field = _IMPLS["bilinear_field"]
minty_field = _IMPLS["minty_field"]
quad_hvp = _IMPLS["quad_hvp"]
minty_hvp = _IMPLS["minty_hvp"]
ema_update = _IMPLS["ema_update"]
clip_from_sq = _IMPLS["clip_from_sq"]
clip_from_abs = _IMPLS["clip_from_abs"]
step_scaled = _IMPLS["step_scaled"]
step_anchored = _IMPLS["step_anchored"]
weighted_sq = _IMPLS["weighted_sq"]
sq_norm = _IMPLS["sq_norm"]

#: Pure-numpy twins, kept importable for cross-backend consistency tests.
PY_KERNELS = _PY_IMPLS
