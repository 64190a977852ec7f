"""TOML run configuration: loading and schema validation.

Example::

    sigma = "2+sin(x)"
    x0 = 0.0
    H = 0.7
    n = [256, 512, 1024, 2048, 4096, 8192]
    paths = 200
    seed = 20261017
    method = "circulant"      # circulant | cholesky | auto
    batch = 100               # paths per worker task
    alpha = 0.01              # KS level at H = 1/2

    [scheme]
    kind = "milstein_type"    # milstein_type | crank_nicholson
    m = 0
    tol = 1e-13               # Crank-Nicholson fixed point
    max_iter = 200

    [powervar]                # optional; H, n, paths, seed default to the top level
    weight = "2+cos(x)"
    kappa = 3
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .expr import ExprSyntaxError, UnknownIdentifierError, parse_sigma
from .fbm import METHODS
from .mc import ConfigError, ExperimentConfig, PowerVarConfig
from .schemes import CRANK_NICHOLSON, MILSTEIN, SchemeSpec

_NUMBER = (int, float)

TOP_KEYS = {
    "sigma": str, "x0": _NUMBER, "H": _NUMBER, "n": (int, list), "paths": int,
    "seed": int, "method": str, "batch": int, "alpha": _NUMBER,
    "scheme": dict, "powervar": dict,
}
SCHEME_KEYS = {"kind": str, "m": int, "tol": _NUMBER, "max_iter": int}
POWERVAR_KEYS = {"weight": str, "kappa": int, "H": _NUMBER, "n": (int, list),
                 "paths": int, "seed": int}
REQUIRED = ("sigma", "H", "n", "paths", "seed")


@dataclass(frozen=True)
class RunConfig:
    source: str
    experiment: ExperimentConfig
    powervar: PowerVarConfig | None


def _check_keys(table: dict, schema: dict, where: str) -> None:
    for key, value in table.items():
        if key not in schema:
            raise ConfigError(f"{where}: unknown key {key!r}")
        want = schema[key]
        # bool is an int subclass; never accept it for numbers
        if isinstance(value, bool) or not isinstance(value, want):
            raise ConfigError(f"{where}: key {key!r} has the wrong type "
                              f"({type(value).__name__})")


def _n_list(value, where: str) -> tuple:
    items = [value] if isinstance(value, int) else value
    if not items or not all(isinstance(v, int) and not isinstance(v, bool) for v in items):
        raise ConfigError(f"{where}: n must be an integer or a list of integers")
    return tuple(items)


def _expr(text: str, where: str) -> None:
    try:
        parse_sigma(text)
    except (ExprSyntaxError, UnknownIdentifierError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(data: dict, source: str = "<config>", seed: int | None = None,
                 method: str | None = None) -> RunConfig:
    """Validate a decoded TOML document; overrides win over file values."""
    _check_keys(data, TOP_KEYS, source)
    missing = [k for k in REQUIRED if k not in data]
    if missing:
        raise ConfigError(f"{source}: missing required key(s) {', '.join(missing)}")
    sch = data.get("scheme", {})
    _check_keys(sch, SCHEME_KEYS, f"{source} [scheme]")
    kind = sch.get("kind", MILSTEIN)
    if kind not in (MILSTEIN, CRANK_NICHOLSON):
        raise ConfigError(f"{source} [scheme]: kind must be {MILSTEIN!r} or "
                          f"{CRANK_NICHOLSON!r}, got {kind!r}")
    try:
        spec = SchemeSpec(kind, sch.get("m", 0), float(sch.get("tol", 1e-13)),
                          sch.get("max_iter", 200))
    except ValueError as exc:
        raise ConfigError(f"{source} [scheme]: {exc}") from None
    method = method or data.get("method", "circulant")
    if method not in METHODS:
        raise ConfigError(f"{source}: method must be one of {METHODS}, got {method!r}")
    override = seed
    seed = data["seed"] if seed is None else seed
    if not 0 <= seed < 2 ** 64:
        raise ConfigError(f"{source}: seed must fit in 64 unsigned bits")
    _expr(data["sigma"], f"{source}: sigma")
    exp = ExperimentConfig(
        sigma=data["sigma"], hurst=float(data["H"]),
        n_list=_n_list(data["n"], source), paths=data["paths"], seed=seed,
        x0=float(data.get("x0", 0.0)), scheme=spec, method=method,
        batch=data.get("batch", 100), alpha=float(data.get("alpha", 0.01)))
    pv = None
    if "powervar" in data:
        t = data["powervar"]
        _check_keys(t, POWERVAR_KEYS, f"{source} [powervar]")
        for key in ("weight", "kappa"):
            if key not in t:
                raise ConfigError(f"{source} [powervar]: missing key {key!r}")
        _expr(t["weight"], f"{source} [powervar] weight")
        pv = PowerVarConfig(
            weight=t["weight"], kappa=t["kappa"], hurst=float(t.get("H", data["H"])),
            n_list=_n_list(t.get("n", data["n"]), f"{source} [powervar]"),
            paths=t.get("paths", data["paths"]),
            seed=override if override is not None else t.get("seed", seed),
            method=method, alpha=exp.alpha)
    return RunConfig(source, exp, pv)


def load_config(path, seed: int | None = None, method: str | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    return parse_config(data, str(path), seed, method)
