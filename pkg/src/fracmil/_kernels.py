"""Compiled per-path loops.

Everything sequential along a path (the flow integrator, the Milstein-type
recursion, the Crank-Nicholson fixed point) runs here under numba.  Symbolic
expressions are turned into scalar jitted functions by code generation.
Kernels report failures through integer status codes; the Python wrappers
in the public modules turn those into exceptions.

The kernels take compiled functions as arguments and are specialized per
coefficient, so nothing is cached on disk.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .expr import Const, Neg, Pow, Prod, Quot, Sum, Var, _Call, factorial

OK = 0
UNDERFLOW = 1
NONFINITE = 2
MAXITER = 3
NONCONTRACTIVE = 4

_SCALAR: dict = {}


def _scalar_source(exprs, name: str, horner: bool = False) -> str:
    names: dict = {}
    lines = []

    def emit(node):
        if node in names:
            return names[node]
        if isinstance(node, Var):
            return "x"
        if isinstance(node, Const):
            return repr(node.value)
        if isinstance(node, Neg):
            rhs = f"-{emit(node.arg)}"
        elif isinstance(node, Sum):
            rhs = " + ".join(emit(t) for t in node.terms)
        elif isinstance(node, Prod):
            rhs = " * ".join(emit(f) for f in node.factors)
        elif isinstance(node, Quot):
            rhs = f"{emit(node.num)} / {emit(node.den)}"
        elif isinstance(node, Pow):
            b = emit(node.base)
            k = node.exponent
            rhs = f"{b} ** {k}" if k > 0 else f"1.0 / {b} ** {-k}"
        elif isinstance(node, _Call):
            rhs = f"math.{node.name}({emit(node.arg)})"
        else:
            raise TypeError(f"not an expression node: {node!r}")
        t = f"t{len(names)}"
        lines.append(f"    {t} = {rhs}")
        names[node] = t
        return t

    results = [emit(e) for e in exprs]
    if horner:
        # sum_j r_j db^(j+1) / (j+1)!, nested from the highest order down
        acc = f"({results[-1]}) * {1.0 / factorial(len(results))!r}"
        for j in range(len(results) - 2, -1, -1):
            acc = f"({results[j]}) * {1.0 / factorial(j + 1)!r} + db * ({acc})"
        ret = f"db * ({acc})"
        args = "x, db"
    else:
        ret = results[0] if len(results) == 1 else "(" + ", ".join(results) + ",)"
        args = "x"
    body = "\n".join(lines)
    return f"def {name}({args}):\n" + (body + "\n" if body else "") + f"    return {ret}\n"


def scalar_function(expr):
    """A numba-compiled scalar function evaluating ``expr``."""
    key = ("scalar", expr)
    fn = _SCALAR.get(key)
    if fn is None:
        scope = {"math": math, "__name__": __name__}
        exec(_scalar_source([expr], "f"), scope)
        fn = numba.njit(cache=False)(scope["f"])
        _SCALAR[key] = fn
    return fn


def taylor_increment_function(exprs):
    """Compiled (x, db) -> sum_j exprs[j](x) db^(j+1) / (j+1)!, Horner form."""
    exprs = tuple(exprs)
    key = ("horner", exprs)
    fn = _SCALAR.get(key)
    if fn is None:
        scope = {"math": math, "__name__": __name__}
        exec(_scalar_source(exprs, "g", horner=True), scope)
        fn = numba.njit(cache=False)(scope["g"])
        _SCALAR[key] = fn
    return fn


@numba.njit(cache=False)
def _dopri(sigma, u, y, atol, rtol, reach, max_iter):
    """Integrate u' = y sigma(u) over [0, 1]; returns (u, reach, status)."""
    if y == 0.0:
        return u, reach, OK
    ay = abs(y)
    s = 0.0
    h = min(1.0, reach / ay)
    k1 = y * sigma(u)
    for _ in range(max_iter):
        ha = min(h, 1.0 - s)
        k2 = y * sigma(u + ha * (0.2 * k1))
        k3 = y * sigma(u + ha * (3 / 40 * k1 + 9 / 40 * k2))
        k4 = y * sigma(u + ha * (44 / 45 * k1 - 56 / 15 * k2 + 32 / 9 * k3))
        k5 = y * sigma(u + ha * (19372 / 6561 * k1 - 25360 / 2187 * k2
                                 + 64448 / 6561 * k3 - 212 / 729 * k4))
        k6 = y * sigma(u + ha * (9017 / 3168 * k1 - 355 / 33 * k2
                                 + 46732 / 5247 * k3 + 49 / 176 * k4
                                 - 5103 / 18656 * k5))
        un = u + ha * (35 / 384 * k1 + 500 / 1113 * k3 + 125 / 192 * k4
                       - 2187 / 6784 * k5 + 11 / 84 * k6)
        k7 = y * sigma(un)
        err = abs(ha * (71 / 57600 * k1 - 71 / 16695 * k3 + 71 / 1920 * k4
                        - 17253 / 339200 * k5 + 22 / 525 * k6 - 1 / 40 * k7))
        if not math.isfinite(un) or not math.isfinite(err):
            return u, reach, NONFINITE
        ratio = err / (atol + rtol * max(abs(u), abs(un)))
        if ratio == 0.0:
            f = 5.0
        else:
            f = min(5.0, max(0.2, 0.9 * ratio ** -0.2))
        if ratio <= 1.0:
            last = ha >= 1.0 - s
            if not last:
                reach = ha * f * ay
            u = un
            k1 = k7
            s += ha
            h = ha * f
            if last:
                return u, reach, OK
        else:
            h = ha * min(f, 1.0)
            reach = h * ay
            if h * ay < 1e-15 * max(1.0, abs(u)):
                return u, reach, UNDERFLOW
    return u, reach, MAXITER


@numba.njit(cache=False)
def flow_many(sigma, x, y, atol, rtol, max_iter, out, status):
    reach0 = 0.1 * (atol + rtol) ** 0.2
    for i in range(x.size):
        out[i], _, status[i] = _dopri(sigma, x[i], y[i], atol, rtol, reach0,
                                      max_iter)


@numba.njit(cache=False)
def flow_paths(sigma, x0, inc, atol, rtol, max_iter, out, status):
    """out[p, l] = phi(x0, B_l) built increment by increment."""
    npaths, n = inc.shape
    reach0 = 0.1 * (atol + rtol) ** 0.2
    for p in range(npaths):
        u = x0
        reach = reach0
        out[p, 0] = u
        status[p] = OK
        for ell in range(n):
            u, reach, st = _dopri(sigma, u, inc[p, ell], atol, rtol, reach,
                                  max_iter)
            out[p, ell + 1] = u
            if st != OK:
                status[p] = st
                for k in range(ell + 2, n + 1):
                    out[p, k] = np.nan
                break


@numba.njit(cache=False)
def taylor_paths(step, x0, inc, out, status):
    """The explicit recursion X_{l+1} = X_l + step(X_l, dB_l)."""
    npaths, n = inc.shape
    for p in range(npaths):
        u = x0
        out[p, 0] = u
        status[p] = -1
        for ell in range(n):
            u = u + step(u, inc[p, ell])
            out[p, ell + 1] = u
            if not math.isfinite(u):
                status[p] = ell
                for k in range(ell + 2, n + 1):
                    out[p, k] = np.nan
                break


@numba.njit(cache=False)
def crank_paths(sigma, x0, inc, tol, max_iter, out, status, residual):
    """Trapezoidal implicit recursion solved by fixed point from Euler.

    status[p] = -1 on success, otherwise the failing step index; residual[p]
    keeps the largest implicit-equation residual seen along the path.
    """
    npaths, n = inc.shape
    for p in range(npaths):
        u = x0
        out[p, 0] = u
        status[p] = -1
        residual[p] = 0.0
        for ell in range(n):
            db = inc[p, ell]
            su = sigma(u)
            v = u + su * db
            converged = False
            for _ in range(max_iter):
                vn = u + 0.5 * (su + sigma(v)) * db
                if abs(vn - v) < tol:
                    v = vn
                    converged = True
                    break
                v = vn
            if not converged or not math.isfinite(v):
                status[p] = ell
                for k in range(ell + 1, n + 1):
                    out[p, k] = np.nan
                break
            r = abs(v - u - 0.5 * (su + sigma(v)) * db)
            if r > residual[p]:
                residual[p] = r
            u = v
            out[p, ell + 1] = u
