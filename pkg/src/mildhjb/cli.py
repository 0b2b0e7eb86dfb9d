"""Command line entry point: ``mildhjb run`` and ``mildhjb diagnose``.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure.
Failures print a single ``[TAG] message`` line on stderr.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import flatten, load_config
from .errors import CoefficientError, ConfigError, MildHJBError, OutsideRange
from .evolution import BUILTINS, Propagator, SpectralBasis, load_lattice_csv
from .gaussian import Cubature, gamma_series_diagnostic, rkhs_embed
from .hjb import (HJBProblem, SolverConfig, bounded_quadratic, cos_linear, finite_control,
                  picard_solve, resolve_alpha, zero_hamiltonian)
from .ou import OUEngine

COMPOSITION_TOL = 1e-12
ADDITIVITY_TOL = 1e-10
EMBEDDING_TOL = 1e-8


# ------------------------------------------------------------ builders


def build_coefficients(cfg: dict):
    co = cfg["coefficients"]
    meta = dict(holder_mu=co["holder_mu"], sector_shift_w=co["sector_shift_w"],
                space_holder_eps=co["space_holder_eps"])
    if co["lattice"] is not None:
        return load_lattice_csv(co["lattice"], **meta)
    params = dict(co["params"])
    if co["T"] is not None:
        params["T"] = co["T"]
    return BUILTINS[co["builtin"]](**params, **meta)


def build_hamiltonian(cfg: dict):
    ha = cfg["hamiltonian"]
    if ha["kind"] == "zero":
        return zero_hamiltonian()
    N = cfg["discretization"]["N"]
    F, h = [], []
    for c in ha["controls"]:
        if "F" in c:
            F.append([float(v) for v in c["F"]])
        else:
            row = [0.0] * N
            if c["mode"] > 0:
                row[c["mode"] - 1] = float(c.get("amplitude", 1.0))
            F.append(row)
        h.append(float(c["cost"]))
    return finite_control(F, h)


def build_terminal(cfg: dict):
    te = cfg["terminal"]
    N = cfg["discretization"]["N"]
    if te["kind"] == "cos_linear":
        return cos_linear([float(v) for v in te["u"][:N]])
    return bounded_quadratic(te["cap"])


def build_cubature(cfg: dict) -> Cubature:
    cu = cfg["cubature"]
    kind = cu["kind"] or ("gauss_hermite_tensor" if cfg["discretization"]["N"] <= 3
                          else "monte_carlo")
    return Cubature(kind, cu["nodes_per_dim"], cu["sample_count"], cfg["output"]["seed"])


def build_solver_config(cfg: dict) -> SolverConfig:
    d, s = cfg["discretization"], cfg["solver"]
    return SolverConfig(N=d["N"], M=d["M"], substeps=d["substeps"],
                        lattice_nodes=d["lattice_nodes"], x_max=d["x_max"],
                        graded_nodes=d["graded_nodes"], alpha=s["alpha"], sigma_C=s["sigma_C"],
                        beta=s["beta"], margin=s["margin"], tol=s["tol"],
                        max_iter=s["max_iter"], cubature=build_cubature(cfg),
                        probe_pairs=s["probe_pairs"])


# ------------------------------------------------------------ CSV helpers


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in r] for r in reader], dtype=float)
    return header, data.reshape(-1, len(header))


def solution_rows(v):
    X = v.points()
    N = v.N
    for k, t in enumerate(v.time_grid):
        vals = v.values[k].reshape(-1)
        grads = v.gradients[k].reshape(-1, N)
        for j in range(len(X)):
            yield (t, *X[j], vals[j], *grads[j])


def solution_header(N: int) -> list[str]:
    return ["t"] + [f"x{i + 1}" for i in range(N)] + ["v"] + [f"g{i + 1}" for i in range(N)]


# ------------------------------------------------------------ diagnostics


def sample_triples(n_grid: int, count: int, rng) -> list[tuple[int, int, int]]:
    """``count`` index triples ``i < j < k`` drawn uniformly (with replacement)."""
    if n_grid < 3 or count == 0:
        return []
    out = []
    for _ in range(count):
        out.append(tuple(int(v) for v in np.sort(rng.choice(n_grid, 3, replace=False))))
    return out


def ou_diagnostic_rows(engine: OUEngine, times, triples):
    """Rows ``(s, t, r, embedding_norm, sigma_norm, gramian_rank)`` for each triple."""
    rows = []
    for i, j, k in triples:
        s, r, t = times[i], times[j], times[k]
        rows.append((s, t, r, engine.embedding_norm(s, r, t), engine.sigma(s, t).op_norm,
                     engine.gramian(s, t).rank))
    return rows


OU_HEADER = ["s", "t", "r", "embedding_norm", "sigma_norm", "gramian_rank"]
GAMMA_HEADER = ["sigma", "k1", "S1", "k2", "S2", "k3", "S3", "tail", "converged"]


def gamma_rows(cfg):
    rows = []
    for sig in cfg["diagnostics"]["gamma_sigmas"]:
        g = gamma_series_diagnostic(float(sig), cfg["diagnostics"]["gamma_n_max"])
        rows.append((g.sigma, g.ks[0], g.sums[0], g.ks[1], g.sums[1], g.ks[2], g.sums[2],
                     g.tail, g.converged))
    return rows


def _rel(a, b):
    nb = np.linalg.norm(b, 2)
    return float(np.linalg.norm(a - b, 2) / nb) if nb > 0 else float(np.linalg.norm(a, 2))


def evolution_probes(prop: Propagator, triples):
    eye = np.eye(prop.N)
    ident = max(float(np.abs(prop.S_index(i, i) - eye).max()) for i in range(len(prop.grid)))
    comp = add = 0.0
    for i, j, k in triples:
        comp = max(comp, _rel(prop.S_index(j, k) @ prop.S_index(i, j), prop.S_index(i, k)))
        C = prop.S_index(j, k)
        add = max(add, _rel(prop.Q_index(j, k) + C @ prop.Q_index(i, j) @ C.T, prop.Q_index(i, k)))
    return ident, comp, add


def inclusion_probe(engine: OUEngine, times, triples, rng) -> bool:
    """Random vectors in range(Q_{t,r}) must embed in the RKHS of Q_{t,s}."""
    for i, j, k in triples:
        s, r, t = times[i], times[j], times[k]
        inner = engine.gramian(r, t).state
        outer = engine.gramian(s, t).state
        if inner.rank == 0:
            continue
        x = inner.R @ rng.standard_normal(inner.rank)
        try:
            rkhs_embed(outer, x)
        except OutsideRange:
            return False
    return True


# ------------------------------------------------------------ verbs


def _out_dir(cfg, out):
    d = Path(out if out is not None else cfg["output"]["dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _echo(cfg):
    return [(f"config.{k}", v) for k, v in flatten(cfg) if k != "output.dir"]


def _kv(key, val) -> str:
    if isinstance(val, float):
        val = repr(val)
    return f"{key} = {val}"


def run(cfg: dict, out=None, quiet: bool = False) -> int:
    """Full pipeline: coefficients, transition-operator diagnostics, Picard solve."""
    out_dir = _out_dir(cfg, out)
    coeffs = build_coefficients(cfg)
    H = build_hamiltonian(cfg)
    phi = build_terminal(cfg)
    scfg = build_solver_config(cfg)
    alpha, alpha_hat, sigma_C = resolve_alpha(coeffs, scfg)
    scfg.alpha, scfg.sigma_C = alpha, sigma_C
    problem = HJBProblem(coeffs, phi, alpha, scfg)

    rng = np.random.default_rng(cfg["output"]["seed"])
    triples = sample_triples(len(problem.time_grid), cfg["diagnostics"]["triples"], rng)
    rows = ou_diagnostic_rows(problem.engine, problem.time_grid, triples)
    write_csv(out_dir / "ou_diagnostics.csv", OU_HEADER, rows)

    report = None
    status = "converged"
    try:
        v, report, _ = picard_solve(phi, H, coeffs, scfg, problem=problem)
        report.alpha_hat = alpha_hat
    except MildHJBError as exc:
        report = getattr(exc, "report", None)
        status = exc.tag.lower()
        if report is not None:
            report.alpha_hat = alpha_hat
            _write_report(out_dir / "report.txt", cfg, report, alpha_hat, status, rows)
        raise
    write_csv(out_dir / "solution.csv", solution_header(v.N), solution_rows(v))
    _write_report(out_dir / "report.txt", cfg, report, alpha_hat, status, rows)
    if not quiet:
        print(f"converged after {report.iterations} iterations; outputs in {out_dir}")
    return 0


def _write_report(path, cfg, rep, alpha_hat, status, diag_rows):
    lines = ["# mildhjb run report", _kv("status", status)]
    lines += [_kv(k, v) for k, v in _echo(cfg)]
    lines += [
        _kv("alpha", rep.alpha),
        _kv("alpha_hat", rep.alpha_hat if rep.alpha_hat is not None else "configured"),
        _kv("sigma_C", rep.sigma_C),
        _kv("lipschitz_C", rep.lipschitz_C),
        _kv("C", rep.C),
        _kv("epsilon", rep.epsilon),
        _kv("eps1", rep.eps1),
        _kv("eps2", rep.eps2),
        _kv("beta", rep.beta),
        _kv("tol", rep.tol),
        _kv("iterations", rep.iterations),
        _kv("converged", rep.converged),
        _kv("max_contraction_ratio", max(rep.contraction_ratios) if rep.contraction_ratios else 0.0),
        _kv("max_embedding_norm", max((r[3] for r in diag_rows), default=0.0)),
        _kv("clamped_total", int(sum(rep.clamped))),
        "",
        "[iterations]",
        "k,residual_weighted,residual_unweighted,contraction_ratio,clamped",
    ]
    for k in range(rep.iterations):
        ratio = rep.contraction_ratios[k - 1] if k >= 1 else float("nan")
        lines.append(",".join([str(k + 1), repr(rep.residuals[k]),
                               repr(rep.residuals_unweighted[k]), repr(ratio),
                               str(rep.clamped[k])]))
    Path(path).write_text("\n".join(lines) + "\n")


def diagnose(cfg: dict, out=None, quiet: bool = False) -> int:
    """Evolution, Gramian, embedding, exponent-fit and series probes; exit 0 iff all pass."""
    out_dir = _out_dir(cfg, out)
    coeffs = build_coefficients(cfg)
    d = cfg["discretization"]
    basis = SpectralBasis(d["N"])
    prop = Propagator(coeffs, basis, n_cells=d["M"], substeps=d["substeps"])
    engine = OUEngine(prop, build_cubature(cfg))
    rng = np.random.default_rng(cfg["output"]["seed"])
    triples = sample_triples(len(prop.grid), cfg["diagnostics"]["triples"], rng)

    g_rows = gamma_rows(cfg)
    write_csv(out_dir / "gamma_series.csv", GAMMA_HEADER, g_rows)

    ident, comp, add = evolution_probes(prop, triples)
    rows = ou_diagnostic_rows(engine, prop.grid, triples)
    write_csv(out_dir / "ou_diagnostics.csv", OU_HEADER, rows)
    incl = inclusion_probe(engine, prop.grid, triples, rng)
    emb = max((r[3] for r in rows), default=0.0)
    strict = sum(r[3] < 1 - EMBEDDING_TOL for r in rows)

    alpha, alpha_hat, sigma_C = resolve_alpha(coeffs, build_solver_config(
        {**cfg, "solver": {**cfg["solver"], "alpha": None, "sigma_C": None}}))

    checks = [
        ("identity", ident, 0.0, ident == 0.0),
        ("composition", comp, COMPOSITION_TOL, comp <= COMPOSITION_TOL),
        ("gramian_additivity", add, ADDITIVITY_TOL, add <= ADDITIVITY_TOL),
        ("embedding_bound", emb, 1 + EMBEDDING_TOL, emb <= 1 + EMBEDDING_TOL),
        ("gramian_inclusion", int(incl), 1, incl),
        ("alpha_fit", alpha_hat, 1.0, alpha_hat < 1.0),
    ]
    lines = ["# mildhjb diagnose report"]
    lines += [_kv(k, v) for k, v in _echo(cfg)]
    for name, val, bound, ok in checks:
        lines.append(f"check.{name} = {'PASS' if ok else 'FAIL'} value={_fmt(val)} bound={_fmt(bound)}")
    lines.append(_kv("info.sigma_C", sigma_C))
    lines.append(_kv("info.strict_embedding_triples", f"{strict}/{len(rows)}"))
    for r in g_rows:
        verdict = "converged" if r[-1] else "not-converged"
        lines.append(f"info.gamma_series.sigma={_fmt(r[0])} = {verdict} tail={_fmt(r[7])}")
    ok = all(c[3] for c in checks)
    lines.append(_kv("overall", "PASS" if ok else "FAIL"))
    (out_dir / "diagnose_report.txt").write_text("\n".join(lines) + "\n")
    if not quiet:
        for name, val, bound, passed in checks:
            print(f"{'PASS' if passed else 'FAIL'} {name}: {_fmt(val)} (bound {_fmt(bound)})")
    return 0 if ok else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mildhjb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mildhjb {__version__}")
    parser.add_argument("verb", choices=("run", "diagnose"))
    parser.add_argument("--config", required=True, help="TOML scenario file")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--seed", type=int, help="seed (overrides output.seed)")
    parser.add_argument("--quiet", action="store_true", help="no progress output on stdout")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            cfg["output"]["seed"] = args.seed
        verb = run if args.verb == "run" else diagnose
        code = verb(cfg, args.out, args.quiet)
        if code == 2:
            print("[DIAGNOSE_FAIL] one or more diagnostic checks failed", file=sys.stderr)
        return code
    except (ConfigError, CoefficientError) as exc:
        print(f"[{exc.tag}] {exc}", file=sys.stderr)
        return 1
    except MildHJBError as exc:
        print(f"[{exc.tag}] {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"[IO_ERROR] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
