"""Limit functionals of the rescaled endpoint error of the size-m scheme.

Time integrals are left Riemann sums over the path's own grid, so they share
the discretization of the scheme they are compared with.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .expr import (Coefficient, compile_expr, compile_many, differentiate,
                   div, g_function, h_function, mul, sub, Const)
from .fbm import FbmPath, make_rng, standard_normals
from .flow import FlowSolver
from .powervar import (EVEN, ODD_HALF, ODD_LARGE_H, ODD_SMALL_H, RegimeError,
                       gaussian_moment, mixed_noise_scale)

REGIMES = (EVEN, ODD_SMALL_H, ODD_HALF, ODD_LARGE_H)


@dataclass(frozen=True)
class LimitEvaluation:
    regime: str
    value: float
    seed: int


def scheme_regime(m: int, hurst: float) -> str:
    """Which convergence statement covers the size-m scheme at this H."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    lower = 1.0 / (m + 2)
    if not lower < hurst < 1.0:
        raise RegimeError(f"H = {hurst} violates 1/(m+2) < H < 1 "
                          f"(1/(m+2) = {lower:.6g} for m = {m})")
    if m % 2 == 0:
        return EVEN
    if hurst < 0.5:
        return ODD_SMALL_H
    if hurst == 0.5:
        return ODD_HALF
    return ODD_LARGE_H


def rate_exponent(m: int, hurst: float) -> float:
    """r with n^r (X^_1 - X_1) converging to a nondegenerate limit."""
    r = scheme_regime(m, hurst)
    if r == EVEN:
        return (m + 2) * hurst - 1.0
    if r == ODD_SMALL_H:
        return (m + 3) * hurst - 1.0
    if r == ODD_HALF:
        return (m + 1) / 2.0
    return (m + 1) * hurst


def _gate(m: int, hurst: float, wanted: str):
    got = scheme_regime(m, hurst)
    if got != wanted:
        conditions = {
            EVEN: "m even",
            ODD_SMALL_H: "m odd and H < 1/2",
            ODD_HALF: "m odd and H = 1/2",
            ODD_LARGE_H: "m odd and H > 1/2",
        }
        raise RegimeError(f"m = {m}, H = {hurst} does not satisfy "
                          f"{conditions[wanted]} (it falls in regime {got!r})")


def _exact(c, x0, p, flow, exact):
    if exact is not None:
        return np.asarray(exact, dtype=float)
    return (flow or FlowSolver(c)).path(x0, p.values)


def odd_small_h_integrand(c: Coefficient, m: int):
    """g_m - sigma h_m' / 2."""
    h = h_function(c, m)
    return sub(g_function(c, m), mul(Const(0.5), c.sigma, differentiate(h)))


def limit_even(c: Coefficient, m: int, x0: float, p: FbmPath,
               flow: FlowSolver | None = None, exact=None) -> float:
    """mu_{m+2} sigma(X_1) int_0^1 h_m(X_s) ds."""
    _gate(m, p.hurst, EVEN)
    X = _exact(c, x0, p, flow, exact)
    sig, h = compile_many([c.sigma, h_function(c, m)])(X)
    return float(gaussian_moment(m + 2) * sig[-1] * np.mean(h[:-1]))


def limit_odd_small_h(c: Coefficient, m: int, x0: float, p: FbmPath,
                      flow: FlowSolver | None = None, exact=None) -> float:
    """mu_{m+3} sigma(X_1) int_0^1 (g_m - sigma h_m'/2)(X_s) ds."""
    _gate(m, p.hurst, ODD_SMALL_H)
    X = _exact(c, x0, p, flow, exact)
    sig, f = compile_many([c.sigma, odd_small_h_integrand(c, m)])(X)
    return float(gaussian_moment(m + 3) * sig[-1] * np.mean(f[:-1]))


def space_integral(c: Coefficient, m: int, x0: float, x1: float) -> float:
    """int_0^{B_1} h_m(phi(x0, y)) dy, written as int_{x0}^{X_1} h_m/sigma.

    The substitution u = phi(x0, y), du = sigma(u) dy is valid because sigma
    does not vanish; it leaves a smooth deterministic integral for quad.
    """
    f = compile_expr(div(h_function(c, m), c.sigma))
    val, _ = integrate.quad(lambda u: float(f(u)), x0, x1,
                            epsabs=1e-10, epsrel=1e-10, limit=200)
    return val


def limit_odd_large_h(c: Coefficient, m: int, x0: float, p: FbmPath,
                      flow: FlowSolver | None = None, exact=None) -> float:
    """mu_{m+3} sigma(X_1) int_0^{B_1} h_m(phi(x0, y)) dy."""
    _gate(m, p.hurst, ODD_LARGE_H)
    if p.endpoint == 0.0:
        return 0.0
    X = _exact(c, x0, p, flow, exact)
    x1 = float(X[-1])
    sig1 = float(compile_expr(c.sigma)(x1))
    return float(gaussian_moment(m + 3) * sig1 * space_integral(c, m, x0, x1))


def limit_half_sample(c: Coefficient, m: int, x0: float, p: FbmPath, wseed: int,
                      flow: FlowSolver | None = None, exact=None) -> float:
    """One draw of sigma(X_1) (int h_m(X) [s dW + mu_{m+3} dB]
    + mu_{m+3} int g_m(X) ds), with W independent of B and seeded by wseed.

    s = sqrt(mu_{2m+4} - mu_{m+3}^2) is the conditional standard deviation of
    the part of G^{m+2} orthogonal to G (see ``mixed_noise_scale``).
    """
    _gate(m, p.hurst, ODD_HALF)
    X = _exact(c, x0, p, flow, exact)
    sig, h, g = compile_many([c.sigma, h_function(c, m), g_function(c, m)])(X)
    dw = standard_normals(make_rng(wseed), p.n) / np.sqrt(p.n)
    mu = gaussian_moment(m + 3)
    stoch = np.sum(h[:-1] * (mixed_noise_scale(m + 2) * dw + mu * p.increments))
    return float(sig[-1] * (stoch + mu * np.mean(g[:-1])))


def evaluate_limit(c: Coefficient, m: int, x0: float, p: FbmPath,
                   wseed: int | None = None, flow: FlowSolver | None = None,
                   exact=None) -> LimitEvaluation:
    """Dispatch on the regime of (m, H)."""
    r = scheme_regime(m, p.hurst)
    if r == EVEN:
        v = limit_even(c, m, x0, p, flow, exact)
    elif r == ODD_SMALL_H:
        v = limit_odd_small_h(c, m, x0, p, flow, exact)
    elif r == ODD_LARGE_H:
        v = limit_odd_large_h(c, m, x0, p, flow, exact)
    else:
        if wseed is None:
            raise ValueError("the H = 1/2 limit needs a seed for W")
        v = limit_half_sample(c, m, x0, p, wseed, flow, exact)
    return LimitEvaluation(r, v, p.seed)
