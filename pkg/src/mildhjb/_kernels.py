"""Hot numeric kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``MILDHJB_NUMBA`` is not set to
``0``.  Both paths are always importable (``*_numpy`` / ``*_numba``) so tests
and the benchmark can compare them directly.
"""
import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("MILDHJB_NUMBA", "1").strip() not in ("0", "false", "no")


def _njit(fn):
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# Higham (2005) degree-13 Pade coefficients and scaling threshold.
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
])
_THETA13 = 5.371920351148152


def _expm_core(A, b, theta):
    n = A.shape[0]
    norm1 = 0.0
    for j in range(n):
        col = 0.0
        for i in range(n):
            col += abs(A[i, j])
        if col > norm1:
            norm1 = col
    s = 0
    if norm1 > theta:
        s = int(math.ceil(math.log2(norm1 / theta)))
    X = A / (2.0 ** s)
    ident = np.eye(n)
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X4 @ X2
    U = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2)
             + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * ident)
    V = (X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2)
         + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * ident)
    R = np.ascontiguousarray(np.linalg.solve(V - U, V + U))
    for _ in range(s):
        R = R @ R
    return R


def expm_numpy(A):
    """Matrix exponential, scaling-and-squaring with a fixed degree-13 Pade approximant."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    return _expm_core(A, _PADE13, _THETA13)


_expm_jit = _njit(_expm_core)


def expm_numba(A):
    A = np.ascontiguousarray(A, dtype=np.float64)
    return _expm_jit(A, _PADE13, _THETA13)


def _prepare_lattice(field, n_dim):
    field = np.asarray(field, dtype=np.float64)
    shape = np.array(field.shape[:n_dim], dtype=np.int64)
    flat = np.ascontiguousarray(field.reshape(int(np.prod(shape)), -1))
    strides = np.ones(n_dim, dtype=np.int64)
    for d in range(n_dim - 2, -1, -1):
        strides[d] = strides[d + 1] * shape[d + 1]
    return flat, shape, strides


def interp_lattice_numpy(field, lo, step, points):
    """Multilinear interpolation of ``field`` (lattice dims + trailing K) at ``points``.

    Points outside the box are clamped to it.  Returns ``(values, n_clamped)``
    where values has shape ``(P, K)``.
    """
    points = np.asarray(points, dtype=np.float64)
    n_pts, n_dim = points.shape
    flat, shape, strides = _prepare_lattice(field, n_dim)
    lo = np.asarray(lo, dtype=np.float64)
    step = np.asarray(step, dtype=np.float64)
    u = (points - lo) / step
    upper = (shape - 1).astype(np.float64)
    outside = np.any((u < 0.0) | (u > upper), axis=1)
    u = np.minimum(np.maximum(u, 0.0), upper)
    idx = np.minimum(np.floor(u).astype(np.int64), np.maximum(shape - 2, 0))
    frac = u - idx
    out = np.zeros((n_pts, flat.shape[1]))
    for corner in range(1 << n_dim):
        w = np.ones(n_pts)
        off = np.zeros(n_pts, dtype=np.int64)
        for d in range(n_dim):
            bit = (corner >> d) & 1
            w = w * (frac[:, d] if bit else 1.0 - frac[:, d])
            off = off + (idx[:, d] + bit) * strides[d]
        out += w[:, None] * flat[off]
    return out, int(outside.sum())


def _interp_core(flat, shape, strides, lo, step, points, out):
    n_pts, n_dim = points.shape
    n_comp = flat.shape[1]
    idx = np.empty(n_dim, dtype=np.int64)
    frac = np.empty(n_dim)
    clamped = 0
    for p in range(n_pts):
        escaped = False
        for d in range(n_dim):
            u = (points[p, d] - lo[d]) / step[d]
            top = shape[d] - 1
            if u < 0.0:
                u = 0.0
                escaped = True
            elif u > top:
                u = float(top)
                escaped = True
            i = int(math.floor(u))
            if i > top - 1:
                i = max(top - 1, 0)
            idx[d] = i
            frac[d] = u - i
        for k in range(n_comp):
            out[p, k] = 0.0
        for corner in range(1 << n_dim):
            w = 1.0
            off = 0
            for d in range(n_dim):
                bit = (corner >> d) & 1
                if bit:
                    w = w * frac[d]
                else:
                    w = w * (1.0 - frac[d])
                off += (idx[d] + bit) * strides[d]
            for k in range(n_comp):
                out[p, k] += w * flat[off, k]
        if escaped:
            clamped += 1
    return clamped


_interp_jit = _njit(_interp_core)


def interp_lattice_numba(field, lo, step, points):
    points = np.ascontiguousarray(points, dtype=np.float64)
    n_dim = points.shape[1]
    flat, shape, strides = _prepare_lattice(field, n_dim)
    out = np.empty((points.shape[0], flat.shape[1]))
    clamped = _interp_jit(flat, shape, strides,
                          np.asarray(lo, dtype=np.float64), np.asarray(step, dtype=np.float64),
                          points, out)
    return out, int(clamped)


def finite_min_numpy(p, F, h):
    """``min_u <F_u, p> + h_u`` row-wise; ties resolve to the lowest control index."""
    scores = np.asarray(p, dtype=np.float64) @ np.asarray(F, dtype=np.float64).T + h
    arg = np.argmin(scores, axis=1)
    return scores[np.arange(scores.shape[0]), arg], arg


def _finite_min_core(p, F, h, val, arg):
    n_pts, n_dim = p.shape
    n_ctrl = F.shape[0]
    for i in range(n_pts):
        best = np.inf
        best_u = 0
        for u in range(n_ctrl):
            acc = 0.0
            for d in range(n_dim):
                acc += p[i, d] * F[u, d]
            acc += h[u]
            if acc < best:
                best = acc
                best_u = u
        val[i] = best
        arg[i] = best_u


_finite_min_jit = _njit(_finite_min_core)


def finite_min_numba(p, F, h):
    p = np.ascontiguousarray(p, dtype=np.float64)
    val = np.empty(p.shape[0])
    arg = np.empty(p.shape[0], dtype=np.int64)
    _finite_min_jit(p, np.ascontiguousarray(F, dtype=np.float64),
                    np.ascontiguousarray(h, dtype=np.float64), val, arg)
    return val, arg


if USE_NUMBA:
    expm = expm_numba
    interp_lattice = interp_lattice_numba
    finite_min = finite_min_numba
else:
    expm = expm_numpy
    interp_lattice = interp_lattice_numpy
    finite_min = finite_min_numpy


def backend():
    return "numba" if USE_NUMBA else "numpy"
