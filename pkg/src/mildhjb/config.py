"""Scenario configuration: TOML in, fully resolved nested dict out.

Every key the program understands appears in :data:`DEFAULTS`; anything else
is rejected.  ``None`` marks an optional key whose absence has a meaning
(for example ``solver.alpha = None`` means "fit alpha from the data").
"""
from __future__ import annotations

import copy
import inspect
import math
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError

DEFAULTS: dict = {
    "coefficients": {
        "builtin": "lp_example",   # constant | linear_in_time | lp_example
        "lattice": None,           # CSV path with header t,xi,a,b,c,g; overrides builtin
        "T": None,                 # horizon for lattice-free builtins (builtin default if absent)
        "holder_mu": 1.0,
        "sector_shift_w": 0.0,
        "space_holder_eps": 1.0,
        "params": {},              # keyword parameters of the builtin
    },
    "discretization": {
        "N": 3,
        "M": 16,
        "substeps": 4,
        "lattice_nodes": 7,
        "x_max": None,             # default 3 sqrt(max diag Q_{T,0})
        "graded_nodes": 16,
    },
    "cubature": {
        "kind": None,              # default: gauss_hermite_tensor for N <= 3, else monte_carlo
        "nodes_per_dim": 9,
        "sample_count": 20000,
    },
    "hamiltonian": {
        "kind": "finite_control",  # finite_control | zero
        "controls": [
            {"mode": 0, "amplitude": 0.0, "cost": 0.0},
            {"mode": 1, "amplitude": 1.0, "cost": 0.5},
            {"mode": 1, "amplitude": -1.0, "cost": 0.5},
        ],
    },
    "terminal": {
        "kind": "cos_linear",      # cos_linear | bounded_quadratic
        "u": [3.0, 2.0, 1.0, 0.5],  # truncated to N entries
        "cap": 1.0,
    },
    "solver": {
        "alpha": None,             # default: fitted alpha rounded up to one decimal
        "sigma_C": None,           # default: fitted constant
        "beta": None,              # default: contraction schedule
        "margin": 0.1,
        "tol": 1e-4,
        "max_iter": 50,
        "probe_pairs": 8,
    },
    "diagnostics": {
        "triples": 100,
        "gamma_sigmas": [0.25, 0.5, 1.0],
        "gamma_n_max": 100000,
    },
    "output": {
        "dir": "out",
        "seed": 0,
        "memory_budget_mb": 512,
    },
}

_CONTROL_KEYS = {"mode", "amplitude", "cost", "F"}
_FREE_TABLES = {("coefficients", "params")}


def _merge(default: dict, user: dict, path: str) -> dict:
    out = copy.deepcopy(default)
    for key, val in user.items():
        where = f"{path}.{key}" if path else key
        if key not in default:
            raise ConfigError(f"unknown key '{where}'", "CONFIG_UNKNOWN_KEY")
        if isinstance(default[key], dict) and tuple(where.split(".")) not in _FREE_TABLES:
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(default[key], val, where)
        else:
            out[key] = val
    return out


def _check_number(cfg, section, key, kind=float, lo=None, hi=None, optional=False, open_lo=False):
    val = cfg[section][key]
    where = f"{section}.{key}"
    if val is None:
        if optional:
            return
        raise ConfigError(f"'{where}' is required")
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"'{where}' must be a number")
    if kind is int and int(val) != val:
        raise ConfigError(f"'{where}' must be an integer")
    if isinstance(val, float) and not math.isfinite(val):
        raise ConfigError(f"'{where}' must be finite")
    if lo is not None and (val < lo or (open_lo and val == lo)):
        raise ConfigError(f"'{where}' = {val} is below its minimum {lo}")
    if hi is not None and val > hi:
        raise ConfigError(f"'{where}' = {val} is above its maximum {hi}")
    cfg[section][key] = kind(val)


def validate(cfg: dict, base_dir: Path | None = None) -> dict:
    """Type- and range-check a merged config in place; resolve relative paths."""
    from .evolution import BUILTINS

    co = cfg["coefficients"]
    if co["lattice"] is not None:
        p = Path(co["lattice"])
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        if not p.is_file():
            raise ConfigError(f"lattice file not found: {co['lattice']}", "CONFIG_MISSING_FILE")
        co["lattice"] = str(p)
    elif co["builtin"] not in BUILTINS:
        raise ConfigError(f"unknown coefficient builtin '{co['builtin']}'")
    else:
        sig = inspect.signature(BUILTINS[co["builtin"]])
        for k in co["params"]:
            if k not in sig.parameters or k == "T":
                raise ConfigError(f"unknown key 'coefficients.params.{k}'", "CONFIG_UNKNOWN_KEY")
    _check_number(cfg, "coefficients", "T", float, 0.0, optional=True, open_lo=True)
    _check_number(cfg, "coefficients", "holder_mu", float, 0.25, 1.0, open_lo=True)
    _check_number(cfg, "coefficients", "sector_shift_w", float, 0.0)
    _check_number(cfg, "coefficients", "space_holder_eps", float, 0.0, open_lo=True)

    _check_number(cfg, "discretization", "N", int, 1, 4)
    _check_number(cfg, "discretization", "M", int, 1)
    _check_number(cfg, "discretization", "substeps", int, 1)
    _check_number(cfg, "discretization", "lattice_nodes", int, 2)
    _check_number(cfg, "discretization", "x_max", float, 0.0, optional=True, open_lo=True)
    _check_number(cfg, "discretization", "graded_nodes", int, 1)

    cu = cfg["cubature"]
    if cu["kind"] not in (None, "gauss_hermite_tensor", "monte_carlo"):
        raise ConfigError(f"unknown cubature kind '{cu['kind']}'")
    _check_number(cfg, "cubature", "nodes_per_dim", int, 1)
    _check_number(cfg, "cubature", "sample_count", int, 1)

    N = cfg["discretization"]["N"]
    ha = cfg["hamiltonian"]
    if ha["kind"] not in ("finite_control", "zero"):
        raise ConfigError(f"unknown hamiltonian kind '{ha['kind']}'")
    if ha["kind"] == "finite_control":
        if not isinstance(ha["controls"], list) or not ha["controls"]:
            raise ConfigError("'hamiltonian.controls' must be a non-empty list")
        for j, c in enumerate(ha["controls"]):
            if not isinstance(c, dict):
                raise ConfigError(f"hamiltonian.controls[{j}] must be a table")
            extra = set(c) - _CONTROL_KEYS
            if extra:
                raise ConfigError(f"unknown key 'hamiltonian.controls[{j}].{sorted(extra)[0]}'",
                                  "CONFIG_UNKNOWN_KEY")
            if "cost" not in c:
                raise ConfigError(f"hamiltonian.controls[{j}] needs 'cost'")
            if "F" in c:
                if "mode" in c or "amplitude" in c:
                    raise ConfigError(f"hamiltonian.controls[{j}]: give F or mode/amplitude, not both")
                if not isinstance(c["F"], list) or len(c["F"]) != N:
                    raise ConfigError(f"hamiltonian.controls[{j}].F must have N={N} entries")
            else:
                mode = c.get("mode")
                if not isinstance(mode, int) or not 0 <= mode <= N:
                    raise ConfigError(f"hamiltonian.controls[{j}].mode must be an integer in [0, N]")

    te = cfg["terminal"]
    if te["kind"] not in ("cos_linear", "bounded_quadratic"):
        raise ConfigError(f"unknown terminal kind '{te['kind']}'")
    if te["kind"] == "cos_linear" and (not isinstance(te["u"], list) or len(te["u"]) < N):
        raise ConfigError(f"'terminal.u' needs at least N={N} entries")
    _check_number(cfg, "terminal", "cap", float, 0.0, open_lo=True)

    _check_number(cfg, "solver", "alpha", float, 0.0, 1.0, optional=True, open_lo=True)
    if cfg["solver"]["alpha"] is not None and cfg["solver"]["alpha"] >= 1.0:
        raise ConfigError("'solver.alpha' must be below 1")
    _check_number(cfg, "solver", "sigma_C", float, 0.0, optional=True, open_lo=True)
    _check_number(cfg, "solver", "beta", float, 0.0, optional=True)
    _check_number(cfg, "solver", "margin", float, 0.0, 1.0, open_lo=True)
    _check_number(cfg, "solver", "tol", float, 0.0, open_lo=True)
    _check_number(cfg, "solver", "max_iter", int, 1)
    _check_number(cfg, "solver", "probe_pairs", int, 6)

    _check_number(cfg, "diagnostics", "triples", int, 0)
    if not isinstance(cfg["diagnostics"]["gamma_sigmas"], list):
        raise ConfigError("'diagnostics.gamma_sigmas' must be a list")
    for s in cfg["diagnostics"]["gamma_sigmas"]:
        if isinstance(s, bool) or not isinstance(s, (int, float)) or s <= 0:
            raise ConfigError("'diagnostics.gamma_sigmas' entries must be positive numbers")
    _check_number(cfg, "diagnostics", "gamma_n_max", int, 4)

    _check_number(cfg, "output", "seed", int, 0)
    _check_number(cfg, "output", "memory_budget_mb", float, 0.0, open_lo=True)
    d = cfg["discretization"]
    n_bytes = 8 * (d["M"] + 1) * d["lattice_nodes"] ** N * (N + 1) * 4
    if n_bytes > cfg["output"]["memory_budget_mb"] * 2 ** 20:
        raise ConfigError(f"lattice needs ~{n_bytes / 2**20:.1f} MiB, over the "
                          f"{cfg['output']['memory_budget_mb']} MiB budget")
    return cfg


def load_config(path) -> dict:
    """Read, merge with :data:`DEFAULTS` and validate a TOML scenario file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", "CONFIG_MISSING_FILE")
    try:
        with path.open("rb") as fh:
            user = tomllib.load(fh)
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", "CONFIG_PARSE") from None
    return validate(_merge(DEFAULTS, user, ""), path.parent)


def resolved_defaults() -> dict:
    return validate(copy.deepcopy(DEFAULTS))


def flatten(cfg: dict, prefix: str = "") -> list[tuple[str, object]]:
    """``[(dotted.key, value), ...]`` in a stable order, for echoing."""
    out = []
    for key in cfg:
        val = cfg[key]
        where = f"{prefix}{key}"
        if isinstance(val, dict) and val:
            out.extend(flatten(val, where + "."))
        else:
            out.append((where, val))
    return out
