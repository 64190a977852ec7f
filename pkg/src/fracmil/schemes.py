"""Milstein-type schemes of size m and the Crank-Nicholson scheme."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .expr import MAX_SIZE, Coefficient
from .fbm import FbmPath, max_increment
from .flow import FlowSolver

MILSTEIN = "milstein_type"
CRANK_NICHOLSON = "crank_nicholson"


class SchemeError(RuntimeError):
    pass


@dataclass(frozen=True)
class SchemeSpec:
    kind: str = MILSTEIN
    m: int = 0
    tol: float = 1e-13
    max_iter: int = 200

    def __post_init__(self):
        if self.kind not in (MILSTEIN, CRANK_NICHOLSON):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if not 0 <= self.m <= MAX_SIZE:
            raise ValueError(f"size m must lie in [0, {MAX_SIZE}], got {self.m}")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("fixed-point tolerance and iteration cap must be positive")

    @property
    def label(self) -> str:
        return f"size-{self.m}" if self.kind == MILSTEIN else "crank-nicholson"


@dataclass(frozen=True, eq=False)
class SchemeRun:
    spec: SchemeSpec
    path: FbmPath
    x0: float
    approx: np.ndarray
    exact: np.ndarray
    endpoint_error: float = field(init=False)
    sup_error: float = field(init=False)

    def __post_init__(self):
        if self.approx.shape != self.exact.shape:
            raise ValueError("approximation and exact solution differ in length")
        object.__setattr__(self, "endpoint_error",
                           float(self.approx[-1] - self.exact[-1]))
        object.__setattr__(self, "sup_error",
                           float(np.max(np.abs(self.approx - self.exact))))

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "approx", "exact", "abs_error"])
        for t, a, e in zip(self.path.times, self.approx, self.exact):
            w.writerow([f"{t:.17g}", f"{a:.17g}", f"{e:.17g}", f"{abs(a - e):.17g}"])


def milstein_increment(c: Coefficient, m: int):
    """Compiled (x, dB) -> sum_{j<=m} D^j sigma(x) dB^{j+1} / (j+1)!."""
    return _kernels.taylor_increment_function([c.d_sigma(j) for j in range(m + 1)])


def milstein_values(c: Coefficient, m: int, x0: float, values) -> np.ndarray:
    """Milstein-type approximations on the grid for a batch of paths."""
    c.require_elliptic()
    if not 0 <= m <= MAX_SIZE:
        raise ValueError(f"size m must lie in [0, {MAX_SIZE}], got {m}")
    vals = np.atleast_2d(np.asarray(values, dtype=float))
    inc = np.ascontiguousarray(np.diff(vals, axis=1))
    out = np.empty_like(vals)
    status = np.empty(vals.shape[0], dtype=np.int64)
    _kernels.taylor_paths(milstein_increment(c, m), float(x0), inc, out, status)
    bad = np.flatnonzero(status >= 0)
    if bad.size:
        p = bad[0]
        raise SchemeError(f"scheme state became non-finite at step "
                          f"{int(status[p])} on path row {p}")
    return out


def crank_nicholson_values(c: Coefficient, x0: float, values, tol: float = 1e-13,
                           max_iter: int = 200, sup_sigma_prime: float | None = None):
    """Crank-Nicholson approximations for a batch of paths.

    Returns ``(values, residuals)`` where ``residuals`` holds the largest
    implicit-equation residual per path.
    """
    c.require_elliptic()
    vals = np.atleast_2d(np.asarray(values, dtype=float))
    inc = np.ascontiguousarray(np.diff(vals, axis=1))
    if sup_sigma_prime is None:
        sup_sigma_prime = c.sup_abs_derivative(1)
    delta = float(np.max(np.abs(inc))) if inc.size else 0.0
    if 0.5 * sup_sigma_prime * delta >= 1.0:
        raise SchemeError(
            f"fixed point is not a contraction: |sigma'|_inf * max|dB| / 2 = "
            f"{0.5 * sup_sigma_prime * delta:.3g} >= 1")
    out = np.empty_like(vals)
    status = np.empty(vals.shape[0], dtype=np.int64)
    residual = np.empty(vals.shape[0])
    _kernels.crank_paths(_kernels.scalar_function(c.sigma), float(x0), inc,
                         float(tol), int(max_iter), out, status, residual)
    bad = np.flatnonzero(status >= 0)
    if bad.size:
        p = bad[0]
        raise SchemeError(f"fixed-point iteration failed to converge within "
                          f"{max_iter} iterations at step {int(status[p])} "
                          f"on path row {p}")
    return out, residual


def _exact(c: Coefficient, x0: float, p: FbmPath, flow: FlowSolver | None):
    flow = flow if flow is not None else FlowSolver(c)
    return flow.path(x0, p.values)


def run_milstein_type(c: Coefficient, spec: SchemeSpec, x0: float, p: FbmPath,
                      flow: FlowSolver | None = None) -> SchemeRun:
    if spec.kind != MILSTEIN:
        raise ValueError("scheme kind is not milstein_type")
    approx = milstein_values(c, spec.m, x0, p.values)[0]
    return SchemeRun(spec, p, float(x0), approx, _exact(c, x0, p, flow))


def run_crank_nicholson(c: Coefficient, spec: SchemeSpec, x0: float, p: FbmPath,
                        flow: FlowSolver | None = None) -> SchemeRun:
    if spec.kind != CRANK_NICHOLSON:
        raise ValueError("scheme kind is not crank_nicholson")
    approx, _ = crank_nicholson_values(c, x0, p.values, spec.tol, spec.max_iter)
    return SchemeRun(spec, p, float(x0), approx[0], _exact(c, x0, p, flow))


def run_scheme(c: Coefficient, spec: SchemeSpec, x0: float, p: FbmPath,
               flow: FlowSolver | None = None) -> SchemeRun:
    if spec.kind == MILSTEIN:
        return run_milstein_type(c, spec, x0, p, flow)
    return run_crank_nicholson(c, spec, x0, p, flow)


def endpoint_scaled_error(run: SchemeRun, exponent: float) -> float:
    """n^exponent * (approx_1 - exact_1)."""
    return float(run.path.n) ** exponent * run.endpoint_error


def sup_error_ratio(run: SchemeRun) -> float:
    """sup error divided by n * (max |dB|)^(m+2)."""
    d = max_increment(run.path)
    return run.sup_error / (run.path.n * d ** (run.spec.m + 2))
