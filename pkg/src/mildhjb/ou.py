"""Ornstein-Uhlenbeck transition operators in the spectral truncation.

``P(s, t) f (x) = E f(S(t, s) x + z)`` with ``z ~ N(0, Q_{t,s})``.  The
Gramian ``Q_{t,s}`` and ``S(t, s)`` come from a :class:`Propagator`; the map
``Sigma(t, s) = R^+ S(t, s)`` gives ``S(t, s)`` in RKHS coordinates and drives
the derivative formulas

    <D P f(x), y>      = E f(Sx + z) <xi, Sigma y>
    <D^2 P f(x) y1, y2> = E f(Sx + z) (<xi, Sigma y1><xi, Sigma y2> - <Sigma y1, Sigma y2>)

where ``z = R xi``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateWindowError, NullControllabilityFailure, RankDeficiencyError
from .evolution import (CoefficientField, ExponentFit, Propagator, SpectralBasis, check_span,
                        fit_loglog, galerkin_multiplication, probe_grid)
from .gaussian import DEFAULT_PINV_TOL, Cubature, GaussianState, smoothing_moments

NULL_CONTROL_TOL = 1e-8


@dataclass(frozen=True)
class Gramian:
    """Covariance ``Q_{t,s}`` as a Gaussian state, with the time nodes it was integrated on."""

    s: float
    t: float
    state: GaussianState
    quad_nodes: np.ndarray

    @property
    def Q(self) -> np.ndarray:
        return self.state.Q

    @property
    def rank(self) -> int:
        return self.state.rank


@dataclass(frozen=True)
class SigmaMap:
    """``Sigma(t, s)``: matrix of shape ``(rank, N)`` and its operator norm."""

    s: float
    t: float
    matrix: np.ndarray
    op_norm: float


def _substep_midpoints(prop: Propagator, i: int, k: int) -> np.ndarray:
    t0 = prop.grid[i:k]
    h = np.diff(prop.grid[i:k + 1]) / prop.substeps
    off = (np.arange(prop.substeps) + 0.5)[None, :]
    return (t0[:, None] + off * h[:, None]).ravel()


def gramian(s: float, t: float, coeffs: CoefficientField | None = None,
            basis: SpectralBasis | None = None, prop: Propagator | None = None,
            pinv_tol: float = DEFAULT_PINV_TOL) -> Gramian:
    """Gramian ``Q_{t,s}`` on the propagator grid.

    ``coeffs``/``basis`` build a default propagator when ``prop`` is omitted.
    """
    if prop is None:
        if coeffs is None or basis is None:
            raise ValueError("need either prop or (coeffs, basis)")
        prop = Propagator(coeffs, basis)
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    i, k = prop.index(s), prop.index(t)
    return Gramian(float(prop.grid[i]), float(prop.grid[k]),
                   GaussianState(prop.Q_index(i, k), pinv_tol),
                   _substep_midpoints(prop, i, k))


def sigma_map(s: float, t: float, prop: Propagator, gram: Gramian | None = None) -> SigmaMap:
    """Minimal-norm representation of ``S(t, s)`` in RKHS coordinates of ``Q_{t,s}``.

    Raises
    ------
    NullControllabilityFailure
        If ``range S(t, s)`` is not inside ``range Q_{t,s}``.
    """
    if gram is None:
        gram = gramian(s, t, prop=prop)
    S = prop.S(gram.s, gram.t)
    G = gram.state
    Sig = G.R_pinv @ S
    err = np.linalg.norm(G.R @ Sig - S, 2)
    if err > NULL_CONTROL_TOL * np.linalg.norm(S, 2):
        raise NullControllabilityFailure(
            f"range S({gram.t:.6g},{gram.s:.6g}) not in range Q (rank {G.rank}/{G.dim}, "
            f"residual {err:.3e})")
    Sig.setflags(write=False)
    norm = float(np.linalg.norm(Sig, 2)) if Sig.size else 0.0
    return SigmaMap(gram.s, gram.t, Sig, norm)


def constructive_bound(s: float, t: float, prop: Propagator) -> float:
    """``(t-s)^-1 (int_s^t ||G(r)^-1 S(r, s)||^2 dr)^(1/2)``, bounding ``||Sigma(t, s)||``.

    Uses the control ``u(r) = (t-s)^-1 G(r)^-1 S(r, s) x``; the integral is the
    trapezoid rule over grid points in ``[s, t]``.
    """
    i, k = prop.index(s), prop.index(t)
    if k <= i:
        raise DegenerateWindowError("constructive bound needs t > s")
    rs = prop.grid[i:k + 1]
    vals = np.array([
        np.linalg.norm(np.linalg.solve(galerkin_multiplication(prop.coeffs, r, prop.basis),
                                       prop.S_index(i, i + j)), 2) ** 2
        for j, r in enumerate(rs)])
    integral = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(rs)))
    return np.sqrt(integral) / (rs[-1] - rs[0])


class OUEngine:
    """Cached Gramians, Sigma maps and transition-operator evaluations.

    Parameters
    ----------
    prop : Propagator
    cub : Cubature, optional
        Default from the truncation dimension.
    pinv_tol : float
    """

    def __init__(self, prop: Propagator, cub: Cubature | None = None,
                 pinv_tol: float = DEFAULT_PINV_TOL):
        self.prop = prop
        self.cub = Cubature.default(prop.N) if cub is None else cub
        self.pinv_tol = pinv_tol
        self._grams: dict = {}
        self._sigmas: dict = {}
        self._lock = threading.Lock()

    @property
    def N(self) -> int:
        return self.prop.N

    def _key(self, s, t):
        if s > t:
            raise ValueError(f"need s <= t, got s={s}, t={t}")
        return self.prop.index(s), self.prop.index(t)

    def gramian(self, s, t) -> Gramian:
        key = self._key(s, t)
        g = self._grams.get(key)
        if g is None:
            g = gramian(self.prop.grid[key[0]], self.prop.grid[key[1]], prop=self.prop,
                        pinv_tol=self.pinv_tol)
            with self._lock:
                g = self._grams.setdefault(key, g)
        return g

    def sigma(self, s, t) -> SigmaMap:
        key = self._key(s, t)
        sm = self._sigmas.get(key)
        if sm is None:
            sm = sigma_map(s, t, self.prop, self.gramian(s, t))
            with self._lock:
                sm = self._sigmas.setdefault(key, sm)
        return sm

    def moments(self, s, t, f, x, order=0, cub=None):
        """Moments of ``f(S x + R xi)`` (see :func:`smoothing_moments`), batched over ``x``."""
        gram = self.gramian(s, t)
        S = self.prop.S(gram.s, gram.t)
        y = np.asarray(x, dtype=float) @ S.T
        return smoothing_moments(gram.state, f, y, self.cub if cub is None else cub, order)

    def apply(self, s, t, f, x, cub=None):
        """``P(s, t) f (x)``."""
        return self.moments(s, t, f, x, 0, cub)[0]

    def gradient(self, s, t, f, x, cub=None):
        """``D_x P(s, t) f (x)`` as an ambient covector (batched over ``x``)."""
        sig = self.sigma(s, t).matrix
        m = self.moments(s, t, f, x, 1, cub)[1]
        return m @ sig

    def hessian(self, s, t, f, x, cub=None):
        """``D_x^2 P(s, t) f (x)`` as a symmetric ``N x N`` matrix (batched over ``x``)."""
        sig = self.sigma(s, t).matrix
        M = self.moments(s, t, f, x, 2, cub)[2]
        M = 0.5 * (M + np.swapaxes(M, -1, -2))
        return sig.T @ M @ sig

    def embedding_norm(self, s, r, t) -> float:
        """Norm of ``S(t, r)`` as a map from the RKHS of ``Q_{r,s}`` to that of ``Q_{t,s}``."""
        return embedding_norm(s, r, t, (self.gramian(s, r), self.gramian(s, t)), self.prop)


def ou_apply(s, t, f, x, cub=None, engine: OUEngine | None = None):
    return engine.apply(s, t, f, x, cub)


def ou_gradient(s, t, f, x, cub=None, engine: OUEngine | None = None):
    return engine.gradient(s, t, f, x, cub)


def ou_hessian(s, t, f, x, cub=None, engine: OUEngine | None = None):
    return engine.hessian(s, t, f, x, cub)


def embedding_norm(s: float, r: float, t: float, grams: tuple[Gramian, Gramian],
                   prop: Propagator) -> float:
    """Largest singular value of ``R_{t,s}^+ S(t, r) R_{r,s}``.

    Parameters
    ----------
    grams : (Gramian, Gramian)
        ``Q_{r,s}`` and ``Q_{t,s}``.

    Raises
    ------
    RankDeficiencyError
        If either Gramian is rank deficient; ``side`` names which.
    """
    if not s < r < t:
        raise ValueError(f"need s < r < t, got {s}, {r}, {t}")
    g_rs, g_ts = grams
    for side, g in (("Q_{r,s}", g_rs), ("Q_{t,s}", g_ts)):
        if not g.state.full_rank:
            raise RankDeficiencyError(side, g.state.rank, g.state.dim)
    M = g_ts.state.R_pinv @ prop.S(r, t) @ g_rs.state.R
    return float(np.linalg.norm(M, 2))


class AlphaFit(NamedTuple):
    """Fitted smoothing exponent ``alpha`` and constant ``C`` of ``||Sigma|| <= C tau^-alpha``."""

    alpha: float
    C: float
    fit: ExponentFit


def smoothing_alpha_fit(pairs: Sequence[tuple[float, float]], coeffs: CoefficientField,
                        basis: SpectralBasis, substeps: int = 4,
                        resolution: float | None = None,
                        pinv_tol: float = DEFAULT_PINV_TOL) -> AlphaFit:
    """Fit ``alpha`` from ``log ||Sigma(t, s)||`` against ``log(t - s)``.

    Parameters
    ----------
    pairs
        At least 6 windows spanning 1.5 decades of ``t - s``.
    resolution : float, optional
        Windows shorter than this are refused as degenerate.

    Raises
    ------
    FitSpanError
        Too few pairs or too narrow a span.
    DegenerateWindowError
        A window below ``resolution``.
    """
    pairs = [(float(s), float(t)) for s, t in pairs]
    taus = np.array([t - s for s, t in pairs])
    if resolution is not None and np.any(taus < resolution * (1 - 1e-9)):
        raise DegenerateWindowError(
            f"window {taus.min():.3e} below grid resolution {resolution:.3e}")
    check_span(taus, 6)
    prop = Propagator(coeffs, basis, grid=probe_grid(pairs, coeffs.T), substeps=substeps)
    engine = OUEngine(prop, pinv_tol=pinv_tol)
    norms = np.array([engine.sigma(s, t).op_norm for s, t in pairs])
    fit = fit_loglog(taus, norms)
    alpha = -fit.slope
    return AlphaFit(alpha, float(np.max(norms * taus ** alpha)), fit)
