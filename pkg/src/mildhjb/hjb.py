"""Mild solutions of semilinear Hamilton-Jacobi equations by weighted Picard iteration.

The mild form is

    v(t, x) = P(t, T) phi (x) + int_t^T P(t, s)[H(s, ., D_x v(s, .))](x) ds,

and ``gamma`` denotes the right-hand side as a map of ``v``.  Iterates live on a
time grid times a tensor lattice; gradients are always produced by the
smoothing formula of the transition operator, never by differencing the
lattice values.  The distance between iterates is the exponentially weighted
norm

    sup_t exp(-beta (T - t)) [ |v(t)|_0 + (T - t)^alpha |D_x v(t)|_0 ].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .errors import AssumptionError, NonContractionError, NotConvergedError
from .evolution import CoefficientField, Propagator, SpectralBasis, probe_pairs
from .gaussian import Cubature
from .ou import OUEngine, smoothing_alpha_fit

# ---------------------------------------------------------------- Hamiltonians


@dataclass(frozen=True)
class Hamiltonian:
    """``H(t, x, p)`` with a Lipschitz constant in ``p``.

    ``eval`` is vectorized: ``x`` and ``p`` have shape ``(..., N)`` and the
    result has shape ``(...)``.
    """

    eval: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    lipschitz_C: float
    kind: str = "custom"
    F: np.ndarray | None = None
    h: np.ndarray | None = None

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def __call__(self, t, x, p):
        return self.eval(t, x, p)


def finite_control(F, h) -> Hamiltonian:
    """``H(t, x, p) = min_u <F_u, p> + h_u`` over a finite control set.

    Parameters
    ----------
    F : array_like, shape (n_controls, N)
        Control directions.
    h : array_like, shape (n_controls,)
        Running costs.  Ties resolve to the lowest control index.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    h = np.asarray(h, dtype=float).reshape(-1)
    if F.shape[0] != h.shape[0] or F.shape[0] == 0:
        raise ValueError("need one cost per control and at least one control")
    F.setflags(write=False)
    h.setflags(write=False)

    def ev(t, x, p):
        p = np.asarray(p, dtype=float)
        vals, _ = _kernels.finite_min(p.reshape(-1, F.shape[1]), F, h)
        return vals.reshape(p.shape[:-1])

    C = float(np.max(np.linalg.norm(F, axis=1)))
    return Hamiltonian(ev, C, "finite_control", F, h)


def zero_hamiltonian() -> Hamiltonian:
    return Hamiltonian(lambda t, x, p: np.zeros(np.shape(p)[:-1]), 0.0, "zero")


def custom_hamiltonian(fn, lipschitz_C: float) -> Hamiltonian:
    return Hamiltonian(fn, float(lipschitz_C), "custom")


def sample_lipschitz(H: Hamiltonian, N: int, T: float = 1.0, n: int = 256,
                     scale: float = 3.0, seed: int = 0) -> float:
    """Largest sampled ``|H(t,x,p) - H(t,x,q)| / |p - q|``."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, T)
    x = rng.normal(scale=scale, size=(n, N))
    p = rng.normal(scale=scale, size=(n, N))
    q = p + rng.normal(size=(n, N))
    d = np.abs(H(t, x, p) - H(t, x, q))
    if not np.all(np.isfinite(d)):
        raise ValueError("Hamiltonian is not finite on the sample")
    return float(np.max(d / np.linalg.norm(p - q, axis=1)))


# ------------------------------------------------------------ terminal data


@dataclass(frozen=True)
class TerminalFunction:
    """Bounded terminal datum ``phi`` with its gradient and sup-norm ``|phi|_0``."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    sup: float

    def __call__(self, x):
        return self.fn(x)

    def shifted(self, c: float) -> "TerminalFunction":
        return TerminalFunction(f"{self.name}+{c}", lambda x: self.fn(x) + c, self.grad,
                                self.sup + abs(c))


def cos_linear(u) -> TerminalFunction:
    """``phi(x) = cos(<u, x>)``."""
    u = np.asarray(u, dtype=float)
    return TerminalFunction("cos_linear", lambda x: np.cos(np.asarray(x) @ u),
                            lambda x: -np.sin(np.asarray(x) @ u)[..., None] * u, 1.0)


def bounded_quadratic(cap: float = 1.0) -> TerminalFunction:
    """``phi(x) = min(<x, x>, cap)``; the gradient is taken as 0 on the cap."""
    if not cap > 0:
        raise ValueError("cap must be positive")

    def fn(x):
        return np.minimum(np.sum(np.asarray(x) ** 2, axis=-1), cap)

    def grad(x):
        x = np.asarray(x, dtype=float)
        inside = np.sum(x ** 2, axis=-1) < cap
        return 2.0 * x * inside[..., None]

    return TerminalFunction("bounded_quadratic", fn, grad, float(cap))


def constant_terminal(c: float) -> TerminalFunction:
    return TerminalFunction("constant", lambda x: np.full(np.shape(x)[:-1], float(c)),
                            lambda x: np.zeros(np.shape(x)), abs(float(c)))


def custom_terminal(fn, sup: float, step: float = 1e-6) -> TerminalFunction:
    """Wrap a vectorized callable; the gradient is by central differences."""
    def grad(x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        for d in range(x.shape[-1]):
            e = np.zeros(x.shape[-1])
            e[d] = step
            out[..., d] = (fn(x + e) - fn(x - e)) / (2 * step)
        return out
    return TerminalFunction("custom", fn, grad, float(sup))


# ------------------------------------------------------------ iterates


@dataclass
class ValueIterate:
    """Values and gradients on ``time_grid x lattice``.

    ``values`` has shape ``(M+1, L, ..., L)`` and ``gradients`` has shape
    ``(M+1, L, ..., L, N)``.  The lattice is uniform on ``[-x_max, x_max]^N``.
    """

    time_grid: np.ndarray
    x_max: float
    n_nodes: int
    alpha: float
    values: np.ndarray
    gradients: np.ndarray
    clamped: int = 0

    @property
    def N(self) -> int:
        return self.gradients.shape[-1]

    @property
    def T(self) -> float:
        return float(self.time_grid[-1])

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.x_max, self.x_max, self.n_nodes)

    @property
    def step(self) -> float:
        return 2 * self.x_max / (self.n_nodes - 1)

    def points(self) -> np.ndarray:
        """Lattice points ``(L**N, N)`` in C order (last coordinate fastest)."""
        return lattice_points(self.x_max, self.n_nodes, self.N)

    @property
    def sup_v(self) -> float:
        return float(np.abs(self.values).max())

    @property
    def sup_grad_weighted(self) -> float:
        tw = (self.T - self.time_grid) ** self.alpha
        g = np.linalg.norm(self.gradients, axis=-1).reshape(len(self.time_grid), -1).max(axis=1)
        return float(np.max(tw * g))

    def norm(self) -> float:
        """Unweighted norm ``sup |v| + sup (T - t)^alpha |D_x v|``."""
        return self.sup_v + self.sup_grad_weighted

    def interpolate(self, k: int, x) -> tuple[np.ndarray, np.ndarray]:
        """Values and gradients of time slice ``k`` at points ``x`` (clamped to the box)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo = np.full(self.N, -self.x_max)
        st = np.full(self.N, self.step)
        field = np.concatenate([self.values[k][..., None], self.gradients[k]], axis=-1)
        out, _ = _kernels.interp_lattice(field, lo, st, x)
        return out[:, 0], out[:, 1:]

    def copy(self) -> "ValueIterate":
        return replace(self, values=self.values.copy(), gradients=self.gradients.copy())


def lattice_points(x_max: float, n_nodes: int, N: int) -> np.ndarray:
    axis = np.linspace(-x_max, x_max, n_nodes)
    mesh = np.meshgrid(*([axis] * N), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, N)


def weighted_norm(v1: ValueIterate, v2: ValueIterate, beta: float) -> float:
    """``sup_t exp(-beta (T-t)) [max |v1-v2| + (T-t)^alpha max |Dv1-Dv2|]``."""
    if (v1.values.shape != v2.values.shape or v1.gradients.shape != v2.gradients.shape
            or not np.array_equal(v1.time_grid, v2.time_grid) or v1.x_max != v2.x_max
            or v1.alpha != v2.alpha):
        raise ValueError("iterates live on different grids or use different alpha")
    tau = v1.T - v1.time_grid
    m = len(tau)
    dv = np.abs(v1.values - v2.values).reshape(m, -1).max(axis=1)
    dg = np.linalg.norm(v1.gradients - v2.gradients, axis=-1).reshape(m, -1).max(axis=1)
    return float(np.max(np.exp(-beta * tau) * (dv + tau ** v1.alpha * dg)))


# ------------------------------------------------------------ beta schedule


class BetaSchedule(NamedTuple):
    epsilon: float
    beta: float
    eps1: float
    eps2: float
    beta1: float
    beta2: float


def _peak(eps, beta, alpha, T):
    """``sup_{0 <= tau <= T} (eps tau)^(1-alpha) exp(-beta tau (1-eps))``."""
    if beta <= 0:
        return (eps * T) ** (1 - alpha)
    tau = min((1 - alpha) / (beta * (1 - eps)), T)
    return (eps * tau) ** (1 - alpha) * math.exp(-beta * tau * (1 - eps))


def step_bounds(C: float, alpha: float, T: float, eps: float, beta: float) -> tuple[float, float, float, float]:
    """The four quantities the contraction argument keeps below 1/5.

    Returns ``(step1_tail, step1_peak, step2_tail, step2_peak)``.
    """
    a1 = 1 - alpha
    tail1 = C * T ** a1 * (1 - eps ** a1) / a1
    peak1 = C * _peak(eps, beta, alpha, T) / a1
    tail2 = C ** 2 * eps ** (-alpha) * (T * (1 - eps)) ** a1 / a1
    peak2 = C ** 2 * (1 - eps) ** (-alpha) * _peak(eps, beta, alpha, T) / a1
    return tail1, peak1, tail2, peak2


def _smallest_beta(g, target=0.2):
    if g(0.0) < target:
        return 0.0
    hi = 1.0
    while g(hi) >= target:
        hi *= 2.0
        if hi > 1e300:
            raise OverflowError("no finite beta found")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * hi:
            break
    return hi


def schedule_beta(C: float, alpha: float, T: float, margin: float = 0.1) -> BetaSchedule:
    """Pick ``(epsilon, beta)`` so that the contraction factor is at most 4/5.

    ``eps1`` and ``eps2`` are the smallest splits making the tail terms of the
    value and gradient estimates fall below 1/5; ``epsilon`` moves a fraction
    ``margin`` of the way from ``max(eps1, eps2)`` to 1.  ``beta`` is the
    smallest weight (by bisection on the closed-form maxima) making both peak
    terms fall below 1/5.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if C < 0 or T <= 0:
        raise ValueError("need C >= 0 and T > 0")
    if not 0 < margin < 1:
        raise ValueError("margin must lie in (0, 1)")
    a1 = 1 - alpha
    if C == 0:
        return BetaSchedule(margin, 0.0, 0.0, 0.0, 0.0, 0.0)
    eps1 = max(0.0, 1 - a1 / (5 * C * T ** a1)) ** (1 / a1)

    # decreasing in e, unbounded at 0 and vanishing at 1
    def tail2(e):
        return C ** 2 * e ** (-alpha) * (T * (1 - e)) ** a1 / a1 - 0.2
    eps2 = brentq(tail2, 1e-300, 1 - 1e-16, xtol=1e-15)
    eps_star = max(eps1, eps2)
    eps = eps_star + margin * (1 - eps_star)
    beta1 = _smallest_beta(lambda b: step_bounds(C, alpha, T, eps, b)[1])
    beta2 = _smallest_beta(lambda b: step_bounds(C, alpha, T, eps, b)[3])
    return BetaSchedule(eps, max(beta1, beta2), eps1, eps2, beta1, beta2)


# ------------------------------------------------------------ solver setup


@dataclass
class SolverConfig:
    """Numerical parameters of the Picard solver (see README for defaults)."""

    N: int = 3
    M: int = 16
    substeps: int = 4
    lattice_nodes: int = 7
    x_max: float | None = None
    graded_nodes: int = 16
    alpha: float | None = None
    sigma_C: float | None = None
    beta: float | None = None
    margin: float = 0.1
    tol: float = 1e-4
    max_iter: int = 50
    cubature: Cubature | None = None
    probe_pairs: int = 8


_MIN_NODE_OFFSET = 1e-9


def graded_rule(t: float, T: float, alpha: float, m: int):
    """Graded nodes and weights for ``int_t^T ... ds``.

    Cells are ``s = t + (T-t) u^(1/(1-alpha))`` for uniform cells in ``u``; nodes
    sit at the ``u``-midpoints.  Returns ``(nodes, value_weights,
    gradient_weights)``: value weights are the cell lengths, gradient weights
    are ``int_cell (s-t)^-alpha ds * (node-t)^alpha`` so that integrands with
    an ``(s-t)^-alpha`` singularity are integrated by product integration.
    Node offsets are floored at ``1e-9 (T - t)``.
    """
    p = 1.0 / (1.0 - alpha)
    L = T - t
    edges = t + L * (np.arange(m + 1) / m) ** p
    edges[-1] = T
    u_mid = (np.arange(m) + 0.5) / m
    # for alpha near 1 the first offsets underflow; keep nodes distinct from t
    nodes = t + L * np.maximum(u_mid ** p, _MIN_NODE_OFFSET)
    wv = np.diff(edges)
    wg = L ** (1 - alpha) / ((1 - alpha) * m) * (nodes - t) ** alpha
    return nodes, wv, wg


class HJBProblem:
    """Everything ``gamma`` needs that does not depend on the iterate.

    Builds the value grid, graded quadrature nodes, a propagator on the union of
    both, the transition-operator engine, the lattice and the terminal sweep
    ``v_0 = P(t, T) phi``.
    """

    def __init__(self, coeffs: CoefficientField, phi: TerminalFunction, alpha: float,
                 cfg: SolverConfig):
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        self.coeffs = coeffs
        self.phi = phi
        self.alpha = float(alpha)
        self.cfg = cfg
        self.basis = SpectralBasis(cfg.N)
        T = coeffs.T
        self.time_grid = np.linspace(0.0, T, cfg.M + 1)
        self.rules = [graded_rule(t, T, self.alpha, cfg.graded_nodes) for t in self.time_grid[:-1]]
        union = set(self.time_grid.tolist())
        for nodes, _, _ in self.rules:
            union.update(nodes.tolist())
        self.prop = Propagator(coeffs, self.basis, grid=np.array(sorted(union)),
                               substeps=cfg.substeps)
        cub = cfg.cubature if cfg.cubature is not None else Cubature.default(cfg.N)
        self.engine = OUEngine(self.prop, cub)
        if cfg.x_max is None:
            self.x_max = 3.0 * math.sqrt(float(np.max(np.diag(self.prop.Q(0.0, T)))))
        else:
            self.x_max = float(cfg.x_max)
        self.points = lattice_points(self.x_max, cfg.lattice_nodes, cfg.N)
        self.shape = (cfg.lattice_nodes,) * cfg.N
        self.v0 = self._terminal_sweep()

    @property
    def T(self) -> float:
        return self.coeffs.T

    def _terminal_sweep(self) -> ValueIterate:
        M, N = self.cfg.M, self.cfg.N
        vals = np.empty((M + 1,) + self.shape)
        grads = np.empty((M + 1,) + self.shape + (N,))
        X = self.points
        vals[M] = self.phi(X).reshape(self.shape)
        grads[M] = self.phi.grad(X).reshape(self.shape + (N,))
        for i, t in enumerate(self.time_grid[:-1]):
            vals[i] = self.engine.apply(t, self.T, self.phi, X).reshape(self.shape)
            grads[i] = self.engine.gradient(t, self.T, self.phi, X).reshape(self.shape + (N,))
        return ValueIterate(self.time_grid, self.x_max, self.cfg.lattice_nodes, self.alpha,
                            vals, grads)

    def empty_like(self) -> ValueIterate:
        return self.v0.copy()


def _grad_at(v: ValueIterate, s: float, y: np.ndarray, counter: list) -> np.ndarray:
    """``D_x v(s, y)``: linear in time between bracketing slices, multilinear in space."""
    tg = v.time_grid
    k = int(np.searchsorted(tg, s, side="right")) - 1
    k = min(max(k, 0), len(tg) - 2)
    theta = (s - tg[k]) / (tg[k + 1] - tg[k])
    # interpolation is linear in the field, so blend the two slices first
    if theta == 0.0:
        field = v.gradients[k]
    else:
        field = (1.0 - theta) * v.gradients[k] + theta * v.gradients[k + 1]
    out, n_cl = _kernels.interp_lattice(field, np.full(v.N, -v.x_max), np.full(v.N, v.step),
                                        y.reshape(-1, v.N))
    counter[0] += n_cl
    return out.reshape(y.shape)


def gamma_map(v: ValueIterate, H: Hamiltonian, phi: TerminalFunction | None,
              problem: HJBProblem) -> ValueIterate:
    """Apply the mild-form map once.

    Values come from the cubature of ``H(s, y, D_x v(s, y))`` at
    ``y = S(s, t) x + z``; gradients from the smoothing formula for each
    term.  ``phi`` must be the problem's terminal datum (the terminal sweep is
    precomputed); pass ``None`` to use it implicitly.  The returned iterate
    carries the number of clamped interpolation points in ``clamped``.
    """
    if phi is not None and phi is not problem.phi:
        raise ValueError("phi differs from the terminal datum the problem was built with")
    if not np.array_equal(v.time_grid, problem.time_grid) or v.alpha != problem.alpha:
        raise ValueError("iterate does not match the problem grid")
    out = problem.v0.copy()
    if H.is_zero:
        out.clamped = 0
        return out
    X = problem.points
    N = problem.cfg.N
    counter = [0]
    for i, t in enumerate(problem.time_grid[:-1]):
        nodes, wv, wg = problem.rules[i]
        val = np.zeros(len(X))
        grad = np.zeros((len(X), N))
        for s, a, b in zip(nodes, wv, wg):
            def f(y, s=s):
                return H(s, y, _grad_at(v, s, y, counter))

            psi, m, _, _ = problem.engine.moments(t, s, f, X, order=1)
            val += a * psi
            grad += b * (m @ problem.engine.sigma(t, s).matrix)
        out.values[i] += val.reshape(problem.shape)
        out.gradients[i] += grad.reshape(problem.shape + (N,))
    out.clamped = counter[0]
    return out


def contraction_probe(v1: ValueIterate, v2: ValueIterate, H: Hamiltonian,
                      phi: TerminalFunction | None, beta: float, problem: HJBProblem) -> float:
    """``|gamma(v1) - gamma(v2)|_beta / |v1 - v2|_beta``."""
    den = weighted_norm(v1, v2, beta)
    if den == 0.0:
        raise ValueError("iterates coincide in the weighted norm")
    return weighted_norm(gamma_map(v1, H, phi, problem), gamma_map(v2, H, phi, problem), beta) / den


# ------------------------------------------------------------ Picard solver


@dataclass
class SolveReport:
    """Iteration history of :func:`picard_solve`.

    ``residuals`` are weighted distances between successive iterates,
    ``residuals_unweighted`` the same with ``beta = 0`` (the stopping norm), and
    ``contraction_ratios`` the ratios of successive weighted residuals.
    """

    iterations: int = 0
    residuals: list = field(default_factory=list)
    residuals_unweighted: list = field(default_factory=list)
    contraction_ratios: list = field(default_factory=list)
    clamped: list = field(default_factory=list)
    beta: float = 0.0
    epsilon: float = 0.0
    eps1: float = 0.0
    eps2: float = 0.0
    alpha: float = 0.0
    alpha_hat: float | None = None
    sigma_C: float | None = None
    lipschitz_C: float = 0.0
    C: float = 0.0
    tol: float = 0.0
    converged: bool = False


def _ratio(a, b):
    if b == 0.0:
        return 0.0 if a == 0.0 else math.inf
    return a / b


def resolve_alpha(coeffs: CoefficientField, cfg: SolverConfig):
    """Fit the smoothing exponent on windows down to the time resolution.

    Returns ``(alpha, alpha_hat, sigma_C)``.  ``alpha`` is the configured value,
    else ``alpha_hat`` rounded up to one decimal.  The fit is skipped when both
    ``alpha`` and ``sigma_C`` are configured.
    """
    if cfg.alpha is not None and cfg.sigma_C is not None:
        return float(cfg.alpha), None, float(cfg.sigma_C)
    basis = SpectralBasis(cfg.N)
    res = coeffs.T / (cfg.M * cfg.substeps)
    tau_max = min(coeffs.T, 1.0 / (2.0 * basis.eigenvalues[0]))
    pairs = probe_pairs(coeffs.T, res, cfg.probe_pairs, tau_max=max(tau_max, res))
    fit = smoothing_alpha_fit(pairs, coeffs, basis, cfg.substeps)
    alpha_hat = fit.alpha
    if cfg.alpha is not None:
        alpha = float(cfg.alpha)
    else:
        alpha = math.ceil(10 * alpha_hat - 1e-9) / 10
        if not 0 < alpha < 1:
            raise AssumptionError(f"fitted smoothing exponent {alpha_hat:.4f} is not below 1")
    taus, norms = fit.fit.taus, fit.fit.values
    sigma_C = float(cfg.sigma_C) if cfg.sigma_C is not None else float(np.max(norms * taus ** alpha))
    return alpha, alpha_hat, sigma_C


def picard_solve(phi: TerminalFunction, H: Hamiltonian, coeffs: CoefficientField,
                 cfg: SolverConfig | None = None, problem: HJBProblem | None = None,
                 callback=None):
    """Solve the mild equation by Picard iteration from the terminal sweep.

    Iteration stops once the unweighted residual is below ``cfg.tol`` (which
    bounds the weighted residual too).

    Returns
    -------
    (ValueIterate, SolveReport, HJBProblem)

    Raises
    ------
    NonContractionError
        Ratio of successive weighted residuals above 1 three times in a row.
    NotConvergedError
        ``max_iter`` reached.
    """
    cfg = SolverConfig() if cfg is None else cfg
    alpha, alpha_hat, sigma_C = resolve_alpha(coeffs, cfg)
    if problem is None:
        problem = HJBProblem(coeffs, phi, alpha, cfg)
    C = max(H.lipschitz_C, sigma_C)
    if cfg.beta is not None:
        sched = BetaSchedule(float("nan"), float(cfg.beta), float("nan"), float("nan"),
                             float("nan"), float("nan"))
    else:
        sched = schedule_beta(C, alpha, coeffs.T, cfg.margin)
    rep = SolveReport(beta=sched.beta, epsilon=sched.epsilon, eps1=sched.eps1, eps2=sched.eps2,
                      alpha=alpha, alpha_hat=alpha_hat, sigma_C=sigma_C,
                      lipschitz_C=H.lipschitz_C, C=C, tol=cfg.tol)
    v = problem.v0
    bad = 0
    for k in range(1, cfg.max_iter + 1):
        nxt = gamma_map(v, H, phi, problem)
        r = weighted_norm(nxt, v, sched.beta)
        r0 = weighted_norm(nxt, v, 0.0)
        rep.iterations = k
        rep.residuals.append(r)
        rep.residuals_unweighted.append(r0)
        rep.clamped.append(nxt.clamped)
        if k >= 2:
            ratio = _ratio(r, rep.residuals[-2])
            rep.contraction_ratios.append(ratio)
            bad = bad + 1 if ratio > 1 else 0
        v = nxt
        if callback is not None:
            callback(k, v, rep)
        if r0 < cfg.tol:
            rep.converged = True
            return v, rep, problem
        if bad >= 3:
            raise NonContractionError(rep)
    raise NotConvergedError(rep)
