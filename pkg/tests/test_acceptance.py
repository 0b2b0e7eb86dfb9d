"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line (echoed in the terminal summary)
before asserting, so a failing criterion still reports its measured value.
"""
import math
import time

import numpy as np
import pytest

from conftest import record
from mildhjb.cli import main
from mildhjb.evolution import (Propagator, SpectralBasis, constant, linear_in_time, lp_example,
                               probe_pairs, smoothing_exponent_probe)
from mildhjb.gaussian import (Cubature, GaussianState, cameron_martin_density,
                              gamma_series_diagnostic, rkhs_embed, smooth_hessian)
from mildhjb.hjb import (HJBProblem, SolverConfig, contraction_probe, cos_linear,
                         finite_control, picard_solve, resolve_alpha, schedule_beta,
                         zero_hamiltonian)
from mildhjb.ou import OUEngine, gramian, smoothing_alpha_fit
from oracles import dp_oracle_1mode, heat_gramian

pytestmark = pytest.mark.acceptance

SEED = 20240517
GH9 = Cubature("gauss_hermite_tensor", 9)
U3 = np.array([1.0, 0.7, 0.4])
C3 = np.array([0.2, -0.1, 0.1])
TEST_FUNCTIONS = {
    "cos": lambda z: np.cos(z @ U3[:z.shape[-1]]),
    "bump": lambda z: np.exp(-0.5 * np.sum((z - C3[:z.shape[-1]]) ** 2, axis=-1)),
    "damped_sin": lambda z: (np.sin(z @ U3[:z.shape[-1]] + 0.3)
                             * np.exp(-0.125 * np.sum(z * z, axis=-1))),
}
LP_H2 = finite_control([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]], [0.0, 0.5, 0.5])
LP_PHI2 = cos_linear([3.0, 2.0])


def random_triples(rng, n_grid, count):
    return [tuple(np.sort(rng.choice(n_grid, 3, replace=False))) for _ in range(count)]


def test_01_evolution_composition():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    prop = Propagator(lp_example(), SpectralBasis(3), n_cells=16, substeps=4)
    worst = 0.0
    for i, j, k in random_triples(rng, len(prop.grid), 50):
        lhs = prop.S_index(i, k)
        err = np.linalg.norm(lhs - prop.S_index(j, k) @ prop.S_index(i, j), 2)
        worst = max(worst, err / np.linalg.norm(lhs, 2))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5.0
    record(1, "evolution composition", ok,
           f"max rel err {worst:.2e} (<= 1e-12), runtime {elapsed:.2f}s (< 5s)")
    assert ok


def test_02_gramian_closed_form():
    rng = np.random.default_rng(SEED)
    prop = Propagator(constant(), SpectralBasis(3), n_cells=16, substeps=4)
    lam = prop.basis.eigenvalues
    worst = 0.0
    for _ in range(20):
        i, k = np.sort(rng.choice(len(prop.grid), 2, replace=False))
        s, t = prop.grid[i], prop.grid[k]
        exact = heat_gramian(lam, t - s)
        Q = gramian(s, t, prop=prop).Q
        worst = max(worst, float(np.max(np.abs(Q - exact)) / np.min(np.diag(exact))))
    ok = worst <= 1e-8
    record(2, "Gramian closed form", ok, f"max rel err {worst:.2e} over 20 pairs (<= 1e-8)")
    assert ok


def test_03_gramian_additivity():
    rng = np.random.default_rng(SEED)
    prop = Propagator(lp_example(), SpectralBasis(3), n_cells=16, substeps=4)
    worst = 0.0
    for i, j, k in random_triples(rng, len(prop.grid), 50):
        Qik = prop.Q_index(i, k)
        S = prop.S_index(j, k)
        rhs = prop.Q_index(j, k) + S @ prop.Q_index(i, j) @ S.T
        worst = max(worst, np.linalg.norm(Qik - rhs, 2) / np.linalg.norm(Qik, 2))
    ok = worst <= 1e-10
    record(3, "Gramian additivity", ok, f"max rel err {worst:.2e} over 50 triples (<= 1e-10)")
    assert ok


def test_04_embedding_bound():
    rng = np.random.default_rng(SEED)
    prop = Propagator(lp_example(), SpectralBasis(3), n_cells=16, substeps=4)
    eng = OUEngine(prop)
    vals = [eng.embedding_norm(*prop.grid[[i, j, k]])
            for i, j, k in random_triples(rng, len(prop.grid), 120)]
    worst = max(vals)
    ok = len(vals) >= 100 and worst <= 1 + 1e-8
    record(4, "embedding bound", ok, f"max norm {worst:.6f} over {len(vals)} triples (<= 1+1e-8)")
    assert ok


def _lp_engines():
    return {N: OUEngine(Propagator(lp_example(), SpectralBasis(N), n_cells=16, substeps=4), GH9)
            for N in (1, 2, 3)}


def _samples(rng, engines, count):
    out = []
    for n in range(count):
        N = (1, 2, 3)[n % 3]
        eng = engines[N]
        i, k = np.sort(rng.choice(len(eng.prop.grid), 2, replace=False))
        out.append((eng, eng.prop.grid[i], eng.prop.grid[k], rng.uniform(-0.5, 0.5, N)))
    return out


def test_05_derivative_formulas_vs_finite_differences():
    rng = np.random.default_rng(SEED)
    engines = _lp_engines()
    eps = 1e-4
    worst_g = worst_h = 0.0
    for eng, s, t, x in _samples(rng, engines, 20):
        E = np.eye(len(x))
        for f in TEST_FUNCTIONS.values():
            g = eng.gradient(s, t, f, x)
            H = eng.hessian(s, t, f, x)
            fdg = np.array([(eng.apply(s, t, f, x + eps * e) - eng.apply(s, t, f, x - eps * e))
                            / (2 * eps) for e in E])
            fdH = np.array([(eng.gradient(s, t, f, x + eps * e) - eng.gradient(s, t, f, x - eps * e))
                            / (2 * eps) for e in E])
            worst_g = max(worst_g, np.linalg.norm(g - fdg) / np.linalg.norm(fdg))
            worst_h = max(worst_h, np.linalg.norm(H - fdH) / np.linalg.norm(fdH))
    ok = worst_g <= 1e-3 and worst_h <= 1e-3
    record(5, "derivative formulas vs FD", ok,
           f"gradient rel err {worst_g:.2e}, Hessian rel err {worst_h:.2e} (<= 1e-3)")
    assert ok


def test_06_derivative_norm_bounds():
    rng = np.random.default_rng(SEED + 1)
    engines = _lp_engines()
    f0 = 1.0  # every test function is bounded by 1
    slack_g = slack_h = slack_hs = -np.inf
    for eng, s, t, x in _samples(rng, engines, 30):
        x = rng.standard_normal(len(x))
        sig = eng.sigma(s, t).op_norm
        state = eng.gramian(s, t).state
        for f in TEST_FUNCTIONS.values():
            g = eng.gradient(s, t, f, x)
            H = eng.hessian(s, t, f, x)
            M = smooth_hessian(state, f, eng.prop.S(s, t) @ x, GH9)
            slack_g = max(slack_g, np.linalg.norm(g) - sig * f0)
            slack_h = max(slack_h, np.linalg.norm(H, 2) - 2 * sig ** 2 * f0)
            slack_hs = max(slack_hs, np.linalg.norm(M, "fro") - math.sqrt(2) * f0)
    ok = slack_g <= 1e-6 * f0 and slack_h <= 1e-6 * f0 and slack_hs <= 1e-6
    record(6, "derivative norm bounds", ok,
           f"max excess: gradient {slack_g:.2e}, Hessian op {slack_h:.2e}, "
           f"Hessian HS {slack_hs:.2e} (all <= 1e-6)")
    assert ok


def test_07_cameron_martin():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for n in range(20):
        dim = 1 + n % 3
        B = rng.standard_normal((dim, dim))
        G = GaussianState(B @ B.T / dim + 0.05 * np.eye(dim))
        c = rng.standard_normal(dim)
        c *= rng.uniform(0.0, 2.0) / np.linalg.norm(c)
        h = rkhs_embed(G, G.R @ c)
        xi, w = GH9.rule(G.rank)
        mean = cameron_martin_density(G, h, xi @ G.R.T) @ w
        worst = max(worst, abs(mean - 1.0))
    ok = worst <= 1e-5
    record(7, "Cameron-Martin normalization", ok, f"max |mean - 1| {worst:.2e} over 20 shifts (<= 1e-5)")
    assert ok


def test_08_exponent_fits():
    theta_fit = smoothing_exponent_probe(constant(T=1.0), SpectralBasis(16), 1.0,
                                         probe_pairs(1.0, 1e-3, 8, tau_max=0.1))
    f = constant(T=0.05)
    _, alpha_hat, _ = resolve_alpha(f, SolverConfig(N=3, M=16, substeps=4))
    ok = -1.15 <= theta_fit.slope <= -0.85 and 0.4 <= alpha_hat <= 0.6
    record(8, "exponent fits", ok,
           f"theta=1 slope {theta_fit.slope:.3f} (in [-1.15,-0.85]), "
           f"alpha_hat {alpha_hat:.3f} for g=1 (in [0.4,0.6])")
    assert ok


def test_09_gamma_series():
    half = gamma_series_diagnostic(0.5)
    quarter = gamma_series_diagnostic(0.25)
    target = math.log(2) / math.pi
    rel = abs(quarter.tail - target) / target
    ok = half.converged and not quarter.converged and rel <= 0.2
    record(9, "gamma series", ok,
           f"sigma=0.5 converged={half.converged}; sigma=0.25 converged={quarter.converged}, "
           f"tail {quarter.tail:.6f} vs log2/pi {target:.6f} (rel {rel:.1e} <= 0.2)")
    assert ok


def test_10_contraction():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    f = lp_example()
    cfg = SolverConfig(N=2, M=16, lattice_nodes=9, alpha=0.5)
    v, rep, prob = picard_solve(LP_PHI2, LP_H2, f, cfg)
    elapsed = time.perf_counter() - t0
    sched = schedule_beta(1.0, 0.5, f.T)
    probes = []
    for _ in range(10):
        v1, v2 = prob.v0.copy(), prob.v0.copy()
        for w in (v1, v2):
            w.values[:-1] += rng.standard_normal(w.values[:-1].shape)
            w.gradients[:-1] += rng.normal(scale=rng.uniform(0.1, 3.0),
                                           size=w.gradients[:-1].shape)
        probes.append(contraction_probe(v1, v2, LP_H2, None, sched.beta, prob))
    pic = max(rep.contraction_ratios)
    ok = max(probes) <= 0.85 and pic <= 0.85 and rep.converged and elapsed < 60.0
    record(10, "contraction", ok,
           f"probe ratios max {max(probes):.4f} at C=1 beta={sched.beta:.1f}; Picard ratios max "
           f"{pic:.4f} (<= 0.85); solve {elapsed:.1f}s (< 60s)")
    assert ok


def test_11_zero_hamiltonian_exact():
    f = lp_example()
    cfg = SolverConfig(N=2, M=16, lattice_nodes=9, alpha=0.5)
    v, rep, prob = picard_solve(LP_PHI2, zero_hamiltonian(), f, cfg)
    X = prob.points
    ref = np.stack([prob.engine.apply(t, f.T, LP_PHI2, X) for t in prob.time_grid])
    diff = float(np.abs(v.values.reshape(len(prob.time_grid), -1) - ref).max())
    # round-off: the t = T slice stores phi(X) while apply evaluates phi on a batched array
    ok = rep.converged and rep.iterations == 1 and diff <= 1e-14 * LP_PHI2.sup
    record(11, "H = 0 exactness", ok,
           f"iterations {rep.iterations}, sup diff {diff:.1e} (round-off, <= 1e-14)")
    assert ok


def test_12_dynamic_programming_oracle():
    T = 0.25
    coeffs = linear_in_time(T=T, a0=1.0, a1=1.0, g0=1.0)
    F, h = [1.0, -1.0], [0.0, 0.1]
    H = finite_control([[1.0], [-1.0]], h)
    cfg = SolverConfig(N=1, M=16, lattice_nodes=17, alpha=0.5, sigma_C=1.0)
    x_max = HJBProblem(coeffs, cos_linear([1.0]), 0.5, cfg).x_max
    u = math.pi / (2 * x_max)
    v, rep, prob = picard_solve(cos_linear([u]), H, coeffs, cfg)
    # oracle: 10x finer time steps on a box twice as wide, so its own clamping stays away
    steps = 10 * cfg.M
    _, xs, V = dp_oracle_1mode(1.0, 1.0, 0.0, 1.0, T, F, h, lambda x: np.cos(u * x),
                               steps, 2 * x_max, 801)
    ref = np.array([np.interp(prob.points[:, 0], xs, V[10 * k]) for k in range(cfg.M + 1)])
    err = float(np.abs(ref - v.values).max())
    ok = rep.converged and err <= 2e-2
    record(12, "dynamic programming oracle", ok, f"sup error {err:.2e} (<= 2e-2)")
    assert ok


def test_13_determinism(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('[coefficients]\nbuiltin = "lp_example"\n[discretization]\nN = 2\n'
                   'lattice_nodes = 7\n[solver]\nalpha = 0.5\n[diagnostics]\ntriples = 20\n')
    for name in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / name),
                     "--seed", "7", "--quiet"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
               for n in files)
    ok = same and files == sorted(p.name for p in (tmp_path / "b").iterdir())
    record(13, "determinism", ok, f"{len(files)} output files byte-identical: {same}")
    assert ok
