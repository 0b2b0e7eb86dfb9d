"""Centered Gaussian measures on R^d, their reproducing kernel Hilbert space,
Gaussian smoothing with exact derivative formulas, and cubature.

Coordinates
-----------
A state ``G`` factors its covariance as ``Q = R R^T`` with ``R = U_r sqrt(L_r)``
built from the eigenvectors above the cutoff ``pinv_tol * lambda_max``.  An
element ``h`` of the RKHS ``H_Q = range(Q)`` has coordinates ``c = R^+ h`` in
the orthonormal basis given by the columns of ``R``, and ``|h|_H = |c|``.
A sample ``z ~ N(0, Q)`` is written ``z = R xi`` with ``xi ~ N(0, I_rank)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from .errors import OutsideRange

Func = Callable[[np.ndarray], np.ndarray]

DEFAULT_PINV_TOL = 1e-10


class GaussianState:
    """Centered Gaussian measure ``N(0, Q)`` with its factor and pseudo-inverse.

    Parameters
    ----------
    Q : array_like
        Symmetric positive semidefinite covariance.
    pinv_tol : float
        Relative eigenvalue cutoff defining the rank.
    """

    def __init__(self, Q, pinv_tol: float = DEFAULT_PINV_TOL):
        Q = np.array(Q, dtype=float, copy=True)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        scale = max(np.abs(Q).max(initial=0.0), 1e-300)
        if np.abs(Q - Q.T).max(initial=0.0) > 1e-12 * max(scale, 1.0):
            raise ValueError("Q is not symmetric")
        Q = 0.5 * (Q + Q.T)
        lam, U = np.linalg.eigh(Q)
        lmax = max(lam.max(initial=0.0), 0.0)
        if lam.size and lam.min() < -1e-10 * max(lmax, 1e-300) and lmax > 0:
            raise ValueError(f"Q is not positive semidefinite (eigenvalue {lam.min():.3e})")
        keep = lam > pinv_tol * lmax if lmax > 0 else np.zeros_like(lam, dtype=bool)
        # largest eigenvalues first
        order = np.argsort(-lam)
        keep_idx = [i for i in order if keep[i]]
        self.dim = Q.shape[0]
        self.Q = Q
        self.pinv_tol = pinv_tol
        self.rank = len(keep_idx)
        self.eigenvalues = lam[keep_idx]
        self.basis = U[:, keep_idx]
        root = np.sqrt(self.eigenvalues)
        self.R = self.basis * root[None, :]
        self.R_pinv = (self.basis / root[None, :]).T
        for arr in (self.Q, self.R, self.R_pinv, self.eigenvalues, self.basis):
            arr.setflags(write=False)

    @property
    def full_rank(self) -> bool:
        return self.rank == self.dim

    def __repr__(self):
        return f"GaussianState(dim={self.dim}, rank={self.rank})"


@dataclass(frozen=True)
class RkhsVector:
    """Element of the RKHS: ambient point, minimal-norm coordinates and norm."""

    ambient: np.ndarray
    coords: np.ndarray
    norm: float


def rkhs_embed(G: GaussianState, x) -> RkhsVector:
    """Embed ``x`` in the RKHS of ``G``.

    Raises
    ------
    OutsideRange
        If ``x`` is not in ``range(Q)`` to relative tolerance ``pinv_tol``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (G.dim,):
        raise ValueError(f"expected a vector of length {G.dim}")
    c = G.R_pinv @ x
    resid = float(np.linalg.norm(G.R @ c - x))
    if resid > G.pinv_tol * np.linalg.norm(x):
        raise OutsideRange(resid)
    return RkhsVector(x.copy(), c, float(np.linalg.norm(c)))


def isometry_phi(G: GaussianState, h: RkhsVector, z) -> np.ndarray:
    """``phi(h)(z) = <q, z>`` with ``q`` the minimal-norm solution of ``Q q = h``.

    Vectorized over leading axes of ``z``.
    """
    q = G.R_pinv.T @ h.coords
    return np.asarray(z, dtype=float) @ q


def cameron_martin_density(G: GaussianState, h: RkhsVector, z) -> np.ndarray:
    """Density of ``N(h, Q)`` with respect to ``N(0, Q)`` at ``z``; identically 1 for ``h = 0``."""
    z = np.asarray(z, dtype=float)
    if h.norm == 0.0:
        return np.ones(z.shape[:-1]) if z.ndim > 1 else np.float64(1.0)
    return np.exp(isometry_phi(G, h, z) - 0.5 * h.norm ** 2)


@lru_cache(maxsize=64)
def _gauss_hermite(rank: int, n: int):
    x, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / w.sum()
    if rank == 0:
        return np.zeros((1, 0)), np.ones(1)
    nodes = np.array(list(itertools.product(x, repeat=rank)))
    weights = np.array([np.prod(c) for c in itertools.product(w, repeat=rank)])
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@lru_cache(maxsize=64)
def _monte_carlo(rank: int, n: int, seed: int):
    rng = np.random.default_rng(seed)
    nodes = rng.standard_normal((n, rank))
    weights = np.full(n, 1.0 / n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True)
class Cubature:
    """Rule for expectations under ``N(0, I_rank)``.

    ``gauss_hermite_tensor`` uses ``nodes_per_dim`` probabilists' Hermite nodes
    per axis; ``monte_carlo`` draws ``sample_count`` seeded normal samples.
    Nodes depend only on ``(kind, size, seed, rank)``.
    """

    kind: str = "gauss_hermite_tensor"
    nodes_per_dim: int = 9
    sample_count: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gauss_hermite_tensor", "monte_carlo"):
            raise ValueError(f"unknown cubature kind {self.kind!r}")
        if self.nodes_per_dim < 1 or self.sample_count < 1:
            raise ValueError("cubature size must be positive")

    @classmethod
    def default(cls, dim: int, seed: int = 0) -> "Cubature":
        if dim <= 3:
            return cls("gauss_hermite_tensor", seed=seed)
        return cls("monte_carlo", seed=seed)

    def rule(self, rank: int) -> tuple[np.ndarray, np.ndarray]:
        """Standard-normal nodes ``(n, rank)`` and weights ``(n,)``."""
        if self.kind == "gauss_hermite_tensor":
            return _gauss_hermite(rank, self.nodes_per_dim)
        return _monte_carlo(rank, self.sample_count, self.seed)


def _default_cub(G, cub):
    return Cubature.default(G.dim) if cub is None else cub


def smoothing_moments(G: GaussianState, f: Func, x, cub: Cubature | None = None,
                      order: int = 2):
    """Cubature moments of ``f(x + R xi)``.

    Returns ``(psi, m, M, fmax)`` where ``psi = E f``, ``m = E f xi`` and
    ``M = E f (xi xi^T - I)`` in RKHS coordinates (``None`` above ``order``),
    with ``f`` replaced by ``f - f(node 0)`` in ``m`` and ``M`` (exact for
    symmetric rules, a control variate for Monte Carlo),
    and ``fmax`` is the max of ``|f|`` over the nodes.  ``x`` may carry
    leading batch axes.
    """
    cub = _default_cub(G, cub)
    xi, w = cub.rule(G.rank)
    x = np.asarray(x, dtype=float)
    Z = xi @ G.R.T
    vals = np.asarray(f(x[..., None, :] + Z), dtype=float)
    # sums are centered on the first node so constants are reproduced exactly
    ref = vals[..., :1]
    fw = (vals - ref) * w
    psi = ref[..., 0] + fw.sum(axis=-1)
    fmax = np.abs(vals).max(axis=-1)
    m = M = None
    if order >= 1:
        m = fw @ xi
    if order >= 2:
        outer = xi[:, :, None] * xi[:, None, :] - np.eye(G.rank)
        M = np.tensordot(fw, outer, axes=([-1], [0]))
    return psi, m, M, fmax


def smooth_convolve(G: GaussianState, f: Func, x, cub: Cubature | None = None):
    """``psi(x) = E f(x + z)``, ``z ~ N(0, Q)``."""
    return smoothing_moments(G, f, x, cub, order=0)[0]


def smooth_gradient(G: GaussianState, f: Func, x, cub: Cubature | None = None,
                    coords: bool = False):
    """Derivative of ``psi`` along the RKHS.

    Returns the ambient covector ``g = (R^+)^T m`` so that ``<g, y>`` equals
    ``E f(x + z) phi(y)(z)`` for ``y`` in range(Q).  With ``coords=True`` the
    RKHS coordinates ``m`` are returned instead.
    """
    m = smoothing_moments(G, f, x, cub, order=1)[1]
    return m if coords else m @ G.R_pinv


def smooth_hessian(G: GaussianState, f: Func, x, cub: Cubature | None = None,
                   coords: bool = True):
    """Second RKHS derivative of ``psi``, in an orthonormal RKHS basis by default.

    ``E f(x+z) (phi(y1) phi(y2) - [y1, y2]_H)``.  With ``coords=False`` the
    ambient bilinear form ``(R^+)^T M R^+`` is returned.
    """
    M = smoothing_moments(G, f, x, cub, order=2)[2]
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    return M if coords else G.R_pinv.T @ M @ G.R_pinv


def h_dual_norm(G: GaussianState, g) -> np.ndarray:
    """Norm of an ambient covector restricted to the RKHS, ``|R^T g|``."""
    return np.linalg.norm(np.asarray(g) @ G.R, axis=-1)


def inclusion_constant(G: GaussianState, Gt: GaussianState) -> float:
    """Smallest ``K`` with ``Q <= K Qt`` (``inf`` when range(Q) is not in range(Qt)).

    Equivalently ``sup |h|^2_{Qt} / |h|^2_Q`` over the RKHS of ``Q``.
    """
    if G.dim != Gt.dim:
        raise ValueError("dimension mismatch")
    if G.rank == 0:
        return 0.0
    for j in range(G.rank):
        try:
            rkhs_embed(Gt, G.R[:, j])
        except OutsideRange:
            return float("inf")
    return float(np.linalg.norm(Gt.R_pinv @ G.R, 2) ** 2)


def range_inclusion(G: GaussianState, Gt: GaussianState, K: float | None = None) -> bool:
    """Whether ``H_Q`` embeds in ``H_Qt`` (with ``|h|^2_{Qt} <= K |h|^2_Q`` if ``K`` is given)."""
    k = inclusion_constant(G, Gt)
    if K is None:
        return np.isfinite(k)
    return k <= K * (1 + 1e-9)


class GammaSeries(NamedTuple):
    sigma: float
    ks: tuple[int, int, int]
    sums: tuple[float, float, float]
    tail: float
    converged: bool


def gamma_series_diagnostic(sigma: float, n_max: int = 100_000) -> GammaSeries:
    """Partial sums of ``sum_n (n pi)^(-4 sigma)`` at ``n_max/4, n_max/2, n_max``.

    Converged when the last doubling adds less than ``1e-4`` of the total.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if n_max < 4:
        raise ValueError("n_max must be >= 4")
    n = np.arange(1, n_max + 1, dtype=float)
    terms = (n * np.pi) ** (-4.0 * sigma)
    ks = (n_max // 4, n_max // 2, n_max)
    sums = tuple(float(np.sum(terms[:k])) for k in ks)
    tail = sums[2] - sums[1]
    return GammaSeries(float(sigma), ks, sums, tail, bool(tail < 1e-4 * sums[2]))
