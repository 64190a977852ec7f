"""The flow phi(x, y) of dphi/dy = sigma(phi), phi(x, 0) = x.

``phi(x, y)`` is obtained by integrating u' = y * sigma(u) over s in [0, 1]
with an adaptive Dormand-Prince 5(4) pair (compiled, see ``_kernels``).
Negative y is the reversed ODE and needs no special casing.  Along a path the
accepted step length carries over from one increment to the next.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .expr import Coefficient, compile_many, factorial
from .fbm import FbmPath



class FlowError(RuntimeError):
    pass


_MESSAGES = {
    _kernels.UNDERFLOW: "step size underflow",
    _kernels.NONFINITE: "non-finite flow state",
    _kernels.MAXITER: "maximum number of solver steps exceeded",
}


class FlowSolver:
    """Evaluates phi(x, y) for a fixed elliptic coefficient."""

    def __init__(self, coefficient: Coefficient, atol: float = 1e-12,
                 rtol: float = 1e-12, max_steps: int = 1_000_000):
        if atol <= 0 or rtol <= 0:
            raise ValueError("tolerances must be positive")
        coefficient.require_elliptic()
        self.coefficient = coefficient
        self.atol = float(atol)
        self.rtol = float(rtol)
        self.max_steps = int(max_steps)
        self._constant = (coefficient.sigma.value if coefficient.is_constant
                          else None)
        self._sigma = (None if self._constant is not None
                       else _kernels.scalar_function(coefficient.sigma))

    def __repr__(self):
        return (f"FlowSolver({self.coefficient.text!r}, atol={self.atol:g}, "
                f"rtol={self.rtol:g})")

    def eval(self, x, y):
        """phi(x, y), broadcasting ``x`` against ``y``."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float),
                                   np.asarray(y, dtype=float))
        if self._constant is not None:
            out = x + self._constant * y
        else:
            xf = np.ascontiguousarray(x.ravel())
            yf = np.ascontiguousarray(y.ravel())
            out = np.empty(xf.size)
            status = np.zeros(xf.size, dtype=np.int64)
            _kernels.flow_many(self._sigma, xf, yf, self.atol, self.rtol,
                               self.max_steps, out, status)
            bad = np.flatnonzero(status)
            if bad.size:
                i = bad[0]
                raise FlowError(f"{_MESSAGES[int(status[i])]} integrating "
                                f"from x={xf[i]!r} over y={yf[i]!r}")
            out = out.reshape(x.shape)
        return float(out) if out.ndim == 0 else out

    __call__ = eval

    def step_doubling_error(self, x, y):
        """|phi(x, y) - phi(phi(x, y/2), y/2)|, a cheap accuracy check."""
        y = np.asarray(y, dtype=float)
        one = self.eval(x, y)
        two = self.eval(self.eval(x, y / 2), y / 2)
        return np.abs(np.asarray(one) - np.asarray(two))

    def path(self, x0: float, values: np.ndarray) -> np.ndarray:
        """Exact solution phi(x0, B) at the grid nodes of one or many paths.

        ``values`` has shape (n + 1,) or (paths, n + 1); evaluation proceeds
        increment by increment through phi(x, y + z) = phi(phi(x, y), z).
        """
        values = np.asarray(values, dtype=float)
        single = values.ndim == 1
        vals = np.atleast_2d(values)
        if self._constant is not None:
            out = x0 + self._constant * vals
            return out[0] if single else out
        inc = np.ascontiguousarray(np.diff(vals, axis=1))
        out = np.empty_like(vals)
        status = np.zeros(vals.shape[0], dtype=np.int64)
        _kernels.flow_paths(self._sigma, float(x0), inc, self.atol, self.rtol,
                            self.max_steps, out, status)
        bad = np.flatnonzero(status)
        if bad.size:
            p = bad[0]
            ell = int(np.flatnonzero(np.isnan(out[p]))[0]) - 1
            raise FlowError(f"{_MESSAGES[int(status[p])]} on path row {p} at "
                            f"step {ell}, state {out[p, ell]!r}")
        return out[0] if single else out


def flow_eval(fs: FlowSolver, x: float, y: float) -> float:
    return fs.eval(x, y)


def flow_path(fs: FlowSolver, x: float, p: FbmPath) -> np.ndarray:
    return fs.path(x, p.values)


def flow_taylor(fs: FlowSolver, x, y, m: int):
    """x + sum_{j=0}^{m+2} D^j sigma(x) y^{j+1} / (j+1)!."""
    c = fs.coefficient
    terms = compile_many([c.d_sigma(j) for j in range(m + 3)])(x)
    y = np.asarray(y, dtype=float)
    out = np.asarray(x, dtype=float) + 0.0 * y
    for j, t in enumerate(terms):
        out = out + t * y ** (j + 1) / factorial(j + 1)
    return float(out) if out.ndim == 0 else out


def group_violation(fs: FlowSolver, x, y, z):
    """|phi(phi(x, y), z) - phi(x, y + z)|."""
    return np.abs(fs.eval(fs.eval(x, y), z) - fs.eval(x, np.add(y, z)))


def taylor_remainder_slope(fs: FlowSolver, x: float, m: int, ys,
                           floor: float = 1e-14):
    """Log-log slope of |phi - Taylor_m| against y, ignoring values at or
    below ``floor`` (about 50 ulp at unit scale, where solver and rounding
    error dominate)."""
    ys = np.asarray(ys, dtype=float)
    diff = np.abs(np.asarray(fs.eval(x, ys)) - flow_taylor(fs, x, ys, m))
    keep = diff > floor * max(1.0, abs(x))
    if keep.sum() < 3:
        return math.nan, diff
    slope = np.polyfit(np.log(ys[keep]), np.log(diff[keep]), 1)[0]
    return float(slope), diff
