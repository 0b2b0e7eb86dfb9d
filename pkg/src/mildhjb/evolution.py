"""Sine-basis Galerkin truncation of a time-dependent elliptic operator and its
evolution family.

The operator acts on functions on ``[0, 1]`` with Dirichlet conditions,

    (A_t x)(xi) = -a(t, xi) x''(xi) + b(t, xi) x'(xi) + c(t, xi) x(xi),

and is projected onto ``e_n(xi) = sqrt(2) sin(n pi xi)``, ``n = 1..N``.  The
evolution family ``S(t, s)`` solves ``dS/dt = -A(t) S`` and is built from
midpoint-frozen exponentials on a nested grid, so composition holds to
round-off on grid points.
"""
from __future__ import annotations

import csv
import threading
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import fractional_matrix_power

from . import _kernels
from .errors import CoefficientError, DegenerateWindowError, EllipticityError, FitSpanError

CoefFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

_GL_ORDER = 8
_SAMPLE_T = 33
_SAMPLE_XI = 129


def _eval(fn: CoefFn, t, xi) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    xi = np.asarray(xi, dtype=float)
    shape = np.broadcast_shapes(t.shape, xi.shape)
    return np.broadcast_to(np.asarray(fn(t, xi), dtype=float), shape)


@dataclass(frozen=True)
class CoefficientField:
    """Coefficients ``a, b, c, g`` of the running parabolic example.

    Each coefficient is a vectorized callable ``f(t, xi)`` that broadcasts over
    array arguments.  Construction samples ``[0, T] x [0, 1]`` on a dense grid
    and rejects fields with ``inf a <= 0`` or ``inf |g| == 0``.

    Attributes
    ----------
    holder_mu : float
        Time-Holder exponent of the coefficients, in ``(1/4, 1]``.  Metadata.
    sector_shift_w : float
        Shift ``w >= 0`` making ``A(t) + w`` sectorial; used by the exponent probe.
    space_holder_eps : float
        Space regularity exponent.  Metadata.
    """

    a: CoefFn
    b: CoefFn
    c: CoefFn
    g: CoefFn
    T: float = 1.0
    holder_mu: float = 1.0
    sector_shift_w: float = 0.0
    space_holder_eps: float = 1.0
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.T > 0:
            raise CoefficientError(f"horizon T must be positive, got {self.T}")
        if not 0.25 < self.holder_mu <= 1.0:
            raise CoefficientError(f"holder_mu must lie in (1/4, 1], got {self.holder_mu}")
        if self.sector_shift_w < 0:
            raise CoefficientError("sector_shift_w must be >= 0")
        if not self.space_holder_eps > 0:
            raise CoefficientError("space_holder_eps must be positive")
        tt, xx = np.meshgrid(np.linspace(0.0, self.T, _SAMPLE_T),
                             np.linspace(0.0, 1.0, _SAMPLE_XI), indexing="ij")
        amin = float(_eval(self.a, tt, xx).min())
        if not amin > 0:
            k = np.unravel_index(np.argmin(_eval(self.a, tt, xx)), tt.shape)
            raise EllipticityError(
                f"a(t, xi) = {amin:.6g} <= 0 at t={tt[k]:.6g}, xi={xx[k]:.6g}")
        for name in ("b", "c"):
            vals = _eval(getattr(self, name), tt, xx)
            if not np.all(np.isfinite(vals)):
                raise CoefficientError(f"coefficient {name} is not finite on the sample grid")
        gabs = np.abs(_eval(self.g, tt, xx))
        if not np.all(np.isfinite(gabs)) or gabs.min() <= 0:
            raise CoefficientError("g must satisfy 0 < k1 <= |g| on the sample grid")
        object.__setattr__(self, "_bounds", (amin, float(gabs.min()), float(gabs.max())))

    @property
    def ellipticity(self) -> float:
        """Sampled ``inf a``."""
        return self._bounds[0]

    @property
    def g_bounds(self) -> tuple[float, float]:
        """Sampled ``(k1, k2)`` with ``k1 <= |g| <= k2``."""
        return self._bounds[1], self._bounds[2]


def _const(v: float) -> CoefFn:
    return lambda t, xi: np.full(np.broadcast_shapes(np.shape(t), np.shape(xi)), float(v))


def constant(T: float = 1.0, a: float = 1.0, b: float = 0.0, c: float = 0.0,
             g: float = 1.0, **meta) -> CoefficientField:
    """Constant coefficients."""
    return CoefficientField(_const(a), _const(b), _const(c), _const(g), T=T, name="constant",
                            params=dict(a=a, b=b, c=c, g=g), **meta)


def linear_in_time(T: float = 1.0, a0: float = 1.0, a1: float = 1.0, b0: float = 0.0,
                   b1: float = 0.0, c0: float = 0.0, c1: float = 0.0, g0: float = 1.0,
                   g1: float = 0.0, **meta) -> CoefficientField:
    """Coefficients ``k0 + k1 t``, constant in space."""
    def lin(k0, k1):
        return lambda t, xi: k0 + k1 * np.asarray(t, dtype=float) + 0.0 * np.asarray(xi, dtype=float)
    return CoefficientField(lin(a0, a1), lin(b0, b1), lin(c0, c1), lin(g0, g1), T=T,
                            name="linear_in_time",
                            params=dict(a0=a0, a1=a1, b0=b0, b1=b1, c0=c0, c1=c1, g0=g0, g1=g1),
                            **meta)


def lp_example(T: float = 0.05, a_amp: float = 0.3, b_amp: float = 0.5, c0: float = 0.5,
               g0: float = 1.5, g_amp: float = 0.3, **meta) -> CoefficientField:
    """Smooth non-autonomous field with ``g`` bounded away from zero.

    ``a = 1 + a_amp xi(1-xi)(1 + sin(2 pi t/T))``, ``b = b_amp cos(pi xi) t/T``,
    ``c = c0 (1 + xi)`` and ``g = g0 + g_amp sin(pi xi) cos(2 pi t/T)``, so that
    ``g0 - g_amp <= |g| <= g0 + g_amp`` whenever ``g_amp < g0``.
    """
    if not 0 <= g_amp < g0:
        raise CoefficientError("lp_example needs 0 <= g_amp < g0 so that |g| is bounded below")

    def a(t, xi):
        return 1.0 + a_amp * xi * (1.0 - xi) * (1.0 + np.sin(2 * np.pi * t / T))

    def b(t, xi):
        return b_amp * np.cos(np.pi * xi) * t / T

    def c(t, xi):
        return c0 * (1.0 + xi) + 0.0 * t

    def g(t, xi):
        return g0 + g_amp * np.sin(np.pi * xi) * np.cos(2 * np.pi * t / T)

    return CoefficientField(a, b, c, g, T=T, name="lp_example",
                            params=dict(a_amp=a_amp, b_amp=b_amp, c0=c0, g0=g0, g_amp=g_amp),
                            **meta)


BUILTINS = {"constant": constant, "linear_in_time": linear_in_time, "lp_example": lp_example}


def load_lattice_csv(path, **meta) -> CoefficientField:
    """Read a tabulated field from a CSV with header ``t,xi,a,b,c,g``.

    The rows must cover a full ``(t, xi)`` tensor lattice with ``t`` starting at
    0 and ``xi`` spanning ``[0, 1]``.  Values are interpolated bilinearly;
    queries are clipped to the lattice.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != ["t", "xi", "a", "b", "c", "g"]:
            raise CoefficientError(f"lattice header must be t,xi,a,b,c,g, got {','.join(header)}")
        try:
            rows = np.array([[float(v) for v in r] for r in reader if r], dtype=float)
        except ValueError as exc:
            raise CoefficientError(f"{path}: {exc}") from None
    if rows.ndim != 2 or rows.shape[0] < 4:
        raise CoefficientError("lattice file needs at least a 2x2 lattice")
    ts, ti = np.unique(rows[:, 0], return_inverse=True)
    xs, xi = np.unique(rows[:, 1], return_inverse=True)
    if len(ts) < 2 or len(xs) < 2 or rows.shape[0] != len(ts) * len(xs):
        raise CoefficientError("lattice rows do not form a complete (t, xi) tensor grid")
    table = np.full((len(ts), len(xs), 4), np.nan)
    table[ti, xi] = rows[:, 2:]
    if np.isnan(table).any():
        raise CoefficientError("lattice has duplicate or missing (t, xi) entries")
    if ts[0] != 0.0 or xs[0] != 0.0 or xs[-1] != 1.0:
        raise CoefficientError("lattice must start at t=0 and span xi in [0, 1]")

    def make(k):
        interp = RegularGridInterpolator((ts, xs), table[:, :, k], method="linear")

        def fn(t, x):
            t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
            pts = np.stack([np.clip(t, ts[0], ts[-1]), np.clip(x, 0.0, 1.0)], axis=-1)
            return interp(pts.reshape(-1, 2)).reshape(t.shape)
        return fn

    return CoefficientField(make(0), make(1), make(2), make(3), T=float(ts[-1]),
                            name="lattice", params=dict(path=str(path)), **meta)


@dataclass(frozen=True)
class SpectralBasis:
    """First ``N`` Dirichlet sine modes on ``[0, 1]`` with a fixed space quadrature."""

    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return (np.arange(1, self.N + 1) * np.pi) ** 2

    @cached_property
    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Composite Gauss-Legendre nodes and weights, 8 per element, ``4N`` elements."""
        x, w = np.polynomial.legendre.leggauss(_GL_ORDER)
        n_el = 4 * self.N
        edges = np.linspace(0.0, 1.0, n_el + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return nodes, weights

    def functions(self, xi) -> np.ndarray:
        """``e_n(xi)`` as an array of shape ``(len(xi), N)``."""
        n = np.arange(1, self.N + 1)
        return np.sqrt(2.0) * np.sin(np.pi * np.outer(np.asarray(xi, dtype=float), n))

    def derivatives(self, xi) -> np.ndarray:
        n = np.arange(1, self.N + 1)
        return np.sqrt(2.0) * n * np.pi * np.cos(np.pi * np.outer(np.asarray(xi, dtype=float), n))

    @cached_property
    def _tables(self):
        nodes, weights = self.quadrature
        return nodes, weights, self.functions(nodes), self.derivatives(nodes)

    def gram(self) -> np.ndarray:
        """Quadrature Gram matrix of the basis (the identity up to round-off)."""
        _, w, E, _ = self._tables
        return E.T @ (w[:, None] * E)


def assemble_operator(coeffs: CoefficientField, t: float, basis: SpectralBasis) -> np.ndarray:
    """Galerkin matrix ``A(t)`` of the operator in the sine basis.

    Entry ``(m, n)`` is the quadrature of
    ``e_m [a (n pi)^2 e_n + b sqrt(2) n pi cos(n pi xi) + c e_n]``.

    Raises
    ------
    EllipticityError
        If ``a(t, .) <= 0`` at some quadrature node.
    """
    nodes, w, E, dE = basis._tables
    a = _eval(coeffs.a, t, nodes)
    if np.any(a <= 0):
        k = int(np.argmin(a))
        raise EllipticityError(f"a({t:.6g}, {nodes[k]:.6g}) = {a[k]:.6g} <= 0")
    b = _eval(coeffs.b, t, nodes)
    c = _eval(coeffs.c, t, nodes)
    inner = (a[:, None] * basis.eigenvalues[None, :] + c[:, None]) * E + b[:, None] * dE
    return E.T @ (w[:, None] * inner)


def galerkin_multiplication(coeffs: CoefficientField, t: float, basis: SpectralBasis) -> np.ndarray:
    """Galerkin matrix ``G(t)`` of multiplication by ``g(t, .)``."""
    nodes, w, E, _ = basis._tables
    g = _eval(coeffs.g, t, nodes)
    return E.T @ ((w * g)[:, None] * E)


def _normalize_grid(grid, T: float) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise ValueError("time grid needs at least two points")
    if grid[0] != 0.0 or abs(grid[-1] - T) > 1e-12 * max(T, 1.0):
        raise ValueError(f"time grid must run from 0 to T={T}")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return grid


class Propagator:
    """Evolution family and Gramians on a fixed time grid.

    Parameters
    ----------
    coeffs, basis
        Coefficient field and spectral truncation.
    grid : array_like, optional
        Strictly increasing times from 0 to ``T``.  Defaults to ``n_cells``
        uniform cells.
    substeps : int
        Midpoint-frozen exponential substeps per grid cell.

    Notes
    -----
    Per substep ``[r, r+h]`` the generator is frozen at ``r + h/2``; the
    substep propagator is ``E = exp(-h A)`` and the substep Gramian is the
    exact integral ``int_0^h exp(-A u) G G^T exp(-A^T u) du`` obtained from one
    block exponential.  Cell matrices are products of substeps, and
    ``S(t_k, t_i)`` and ``Q(t_k, t_i)`` are accumulated cell by cell, so
    composition and Gramian additivity hold to round-off on grid points.
    Rows of the cache are built lazily under a lock; the stored arrays are
    never mutated afterwards.
    """

    def __init__(self, coeffs: CoefficientField, basis: SpectralBasis, grid=None,
                 n_cells: int = 16, substeps: int = 4):
        if substeps < 1:
            raise ValueError("substeps must be >= 1")
        self.coeffs = coeffs
        self.basis = basis
        self.T = coeffs.T
        if grid is None:
            if n_cells < 1:
                raise ValueError("n_cells must be >= 1")
            grid = np.linspace(0.0, coeffs.T, n_cells + 1)
        self.grid = _normalize_grid(grid, coeffs.T)
        self.grid.setflags(write=False)
        self.substeps = int(substeps)
        self._index = {float(t): i for i, t in enumerate(self.grid)}
        self._cells_S, self._cells_Q = self._build_cells()
        self._rows: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()

    @property
    def N(self) -> int:
        return self.basis.N

    @property
    def resolution(self) -> float:
        """Smallest substep length."""
        return float(np.min(np.diff(self.grid))) / self.substeps

    def _build_cells(self):
        n = self.N
        cs = np.empty((len(self.grid) - 1, n, n))
        cq = np.empty_like(cs)
        block = np.zeros((2 * n, 2 * n))
        for j in range(len(self.grid) - 1):
            t0, t1 = self.grid[j], self.grid[j + 1]
            h = (t1 - t0) / self.substeps
            S = np.eye(n)
            Q = np.zeros((n, n))
            for k in range(self.substeps):
                r = t0 + (k + 0.5) * h
                A = assemble_operator(self.coeffs, r, self.basis)
                G = galerkin_multiplication(self.coeffs, r, self.basis)
                block[:n, :n] = -A * h
                block[:n, n:] = (G @ G.T) * h
                block[n:, n:] = A.T * h
                F = _kernels.expm(block)
                E = F[:n, :n]
                W = F[:n, n:] @ E.T
                S = E @ S
                Q = E @ Q @ E.T + 0.5 * (W + W.T)
            cs[j], cq[j] = S, Q
        return cs, cq

    def index(self, t: float) -> int:
        """Grid index of ``t``; off-grid times snap to the nearest point with a warning."""
        i = self._index.get(float(t))
        if i is not None:
            return i
        if t < -1e-12 or t > self.T * (1 + 1e-12) + 1e-12:
            raise ValueError(f"time {t} outside [0, {self.T}]")
        i = int(np.argmin(np.abs(self.grid - t)))
        warnings.warn(f"time {t:.12g} is off the grid; snapped to {self.grid[i]:.12g}",
                      stacklevel=3)
        return i

    def _row(self, i: int):
        row = self._rows.get(i)
        if row is not None:
            return row
        with self._lock:
            row = self._rows.get(i)
            if row is None:
                m = len(self.grid) - i
                S = np.empty((m, self.N, self.N))
                Q = np.empty_like(S)
                S[0] = np.eye(self.N)
                Q[0] = 0.0
                for k in range(1, m):
                    C = self._cells_S[i + k - 1]
                    S[k] = C @ S[k - 1]
                    Q[k] = C @ Q[k - 1] @ C.T + self._cells_Q[i + k - 1]
                S.setflags(write=False)
                Q.setflags(write=False)
                row = (S, Q)
                self._rows[i] = row
        return row

    def _pair(self, s, t) -> tuple[int, int]:
        if s > t:
            raise ValueError(f"need s <= t, got s={s}, t={t}")
        i, k = self.index(s), self.index(t)
        return i, k

    def S(self, s: float, t: float) -> np.ndarray:
        """``S(t, s)`` for ``s <= t``."""
        i, k = self._pair(s, t)
        return self._row(i)[0][k - i]

    def Q(self, s: float, t: float) -> np.ndarray:
        """Gramian ``Q_{t,s} = int_s^t S(t,r) G G^T S(t,r)^T dr`` for ``s <= t``."""
        i, k = self._pair(s, t)
        return self._row(i)[1][k - i]

    def S_index(self, i: int, k: int) -> np.ndarray:
        if i > k:
            raise ValueError("need i <= k")
        return self._row(i)[0][k - i]

    def Q_index(self, i: int, k: int) -> np.ndarray:
        if i > k:
            raise ValueError("need i <= k")
        return self._row(i)[1][k - i]

    def build_all(self) -> "Propagator":
        """Populate every cache row (for sharing across threads without locking)."""
        for i in range(len(self.grid)):
            self._row(i)
        return self


def propagate(coeffs: CoefficientField, basis: SpectralBasis, s: float, t: float,
              n_cells: int = 16, substeps: int = 4, grid=None) -> np.ndarray:
    """One-shot ``S(t, s)`` on a fresh propagator grid."""
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    return Propagator(coeffs, basis, grid=grid, n_cells=n_cells, substeps=substeps).S(s, t)


class ExponentFit(NamedTuple):
    """Least-squares fit ``log y = slope log(t - s) + intercept``."""

    slope: float
    intercept: float
    residual: float
    taus: np.ndarray
    values: np.ndarray


def check_span(taus, min_pairs: int, decades: float = 1.5) -> np.ndarray:
    taus = np.asarray(taus, dtype=float)
    if len(taus) < min_pairs:
        raise FitSpanError(f"need at least {min_pairs} pairs, got {len(taus)}")
    if np.any(taus <= 0):
        raise DegenerateWindowError("every pair needs t > s")
    span = np.log10(taus.max() / taus.min())
    if span < decades - 1e-9:
        raise FitSpanError(f"pairs span {span:.3f} decades of t-s, need {decades}")
    return taus


def fit_loglog(taus, values) -> ExponentFit:
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    X = np.column_stack([np.log(taus), np.ones_like(taus)])
    y = np.log(values)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return ExponentFit(float(coef[0]), float(coef[1]), resid, taus, values)


def probe_pairs(T: float, resolution: float, n: int = 8, t_end: float | None = None,
                tau_max: float | None = None) -> list[tuple[float, float]]:
    """Geometric windows ``(t_end - tau, t_end)`` from ``resolution`` up to ``tau_max``.

    Windows shorter than ``resolution`` are never produced, so a coarse grid
    yields a narrow span that the fits refuse.
    """
    t_end = T if t_end is None else t_end
    tau_max = t_end if tau_max is None else min(tau_max, t_end)
    if resolution <= 0 or resolution > tau_max:
        raise DegenerateWindowError(f"resolution {resolution} outside (0, {tau_max}]")
    taus = np.geomspace(resolution, tau_max, n)
    return [(float(t_end - tau), float(t_end)) for tau in taus]


def probe_grid(pairs: Sequence[tuple[float, float]], T: float) -> np.ndarray:
    """Union grid containing 0, ``T`` and every pair endpoint."""
    pts = {0.0, float(T)}
    for s, t in pairs:
        pts.update((float(s), float(t)))
    return np.array(sorted(pts))


def smoothing_exponent_probe(coeffs: CoefficientField, basis: SpectralBasis, theta: float,
                             pairs: Sequence[tuple[float, float]], substeps: int = 4,
                             w: float | None = None) -> ExponentFit:
    """Fit the decay exponent of ``||(A(t) + w)^theta S(t, s)||_2`` in ``t - s``.

    A dedicated propagator is built on the union of the pair endpoints.  The
    fitted slope should be close to ``-theta``.

    Raises
    ------
    FitSpanError
        Fewer than 4 pairs or a span below 1.5 decades.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    pairs = [(float(s), float(t)) for s, t in pairs]
    taus = check_span([t - s for s, t in pairs], 4)
    w = coeffs.sector_shift_w if w is None else w
    prop = Propagator(coeffs, basis, grid=probe_grid(pairs, coeffs.T), substeps=substeps)
    norms = []
    eye = np.eye(basis.N)
    for s, t in pairs:
        A = assemble_operator(coeffs, t, basis) + w * eye
        if theta == 0.0:
            P = eye
        elif theta == 1.0:
            P = A
        else:
            P = np.real(fractional_matrix_power(A, theta))
        norms.append(np.linalg.norm(P @ prop.S(s, t), 2))
    return fit_loglog(taus, norms)
