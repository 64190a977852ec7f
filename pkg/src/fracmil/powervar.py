"""Hermite polynomials, Gaussian moments and weighted power variations."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import integrate

from .expr import Expression, compile_expr, differentiate, parse_sigma
from .fbm import FbmPath, make_rng, standard_normals
from .flow import FlowSolver

EVEN = "even"
ODD_SMALL_H = "odd_small_H"
ODD_HALF = "odd_half"
ODD_LARGE_H = "odd_large_H"


class RegimeError(ValueError):
    pass


def gaussian_moment(k: int) -> int:
    """E[G^k] for G ~ N(0, 1): zero for odd k, (k-1)!! for even k."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k % 2:
        return 0
    out = 1
    for j in range(k - 1, 0, -2):
        out *= j
    return out


def mixed_noise_scale(kappa: int) -> float:
    """Amplitude of the independent noise in the H = 1/2, odd-kappa limit.

    G^kappa = mu_{kappa+1} G + R with R orthogonal to G, so the part of
    n^{(kappa-1)/2} sum g(B) (dB)^kappa not carried by mu_{kappa+1} int g dB
    has conditional variance (mu_{2 kappa} - mu_{kappa+1}^2) int g^2 ds.
    """
    return float(np.sqrt(gaussian_moment(2 * kappa) - gaussian_moment(kappa + 1) ** 2))


@lru_cache(maxsize=None)
def hermite_coefficients(q: int) -> tuple:
    """Integer monomial coefficients (constant term first) of He_q."""
    if q < 0:
        raise ValueError("degree must be nonnegative")
    prev, cur = (1,), (0, 1)
    if q == 0:
        return prev
    for k in range(1, q):
        nxt = [0] * (k + 2)
        for i, a in enumerate(cur):
            nxt[i + 1] += a
        for i, a in enumerate(prev):
            nxt[i] -= k * a
        prev, cur = cur, tuple(nxt)
    return cur


def hermite(q: int, x):
    """He_q(x) by the three-term recurrence He_{k+1} = x He_k - k He_{k-1}."""
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x
    if q == 0:
        return prev
    for k in range(1, q):
        prev, cur = cur, x * cur - k * prev
    return cur


def hermite_expand_odd_monomial(kappa: int) -> dict:
    """Coefficients a with x^kappa - mu_{kappa+1} x = sum_q a[2q+1] He_{2q+1}.

    Solved exactly in integers by peeling off the leading term degree by
    degree (the Hermite basis is monic and triangular).
    """
    if kappa < 3 or kappa % 2 == 0:
        raise ValueError(f"kappa must be an odd integer >= 3, got {kappa}")
    target = [0] * (kappa + 1)
    target[kappa] = 1
    target[1] -= gaussian_moment(kappa + 1)
    out = {}
    for d in range(kappa, -1, -1):
        a = target[d]
        if a == 0:
            continue
        out[d] = a
        for i, coef in enumerate(hermite_coefficients(d)):
            target[i] -= a * coef
    if any(target) or any(d % 2 == 0 or d == 1 for d in out):
        raise ArithmeticError(f"expansion of x^{kappa} left a remainder {target}")
    return dict(sorted(out.items(), reverse=True))


def _as_expr(h) -> Expression:
    return parse_sigma(h) if isinstance(h, str) else h


def _weights_at(h, p: FbmPath, flow: FlowSolver | None, x0: float,
                exact: np.ndarray | None = None) -> np.ndarray:
    """h evaluated at the left grid points, at B or at phi(x0, B)."""
    f = compile_expr(_as_expr(h))
    if flow is None:
        points = p.values[:-1]
    else:
        points = (exact if exact is not None else flow.path(x0, p.values))[:-1]
    return f(points)


def weighted_power_variation(h, p: FbmPath, kappa: int,
                             flow: FlowSolver | None = None, x0: float = 0.0,
                             exact: np.ndarray | None = None) -> float:
    """sum_l h(B_{l/n}) (dB_{l/n})^kappa, or with h evaluated at X_{l/n}
    when a flow is supplied."""
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    return float(np.sum(_weights_at(h, p, flow, x0, exact) * p.increments ** kappa))


def regime(kappa: int, hurst: float) -> str:
    if kappa % 2 == 0:
        return EVEN
    if hurst < 0.5:
        return ODD_SMALL_H
    if hurst == 0.5:
        return ODD_HALF
    return ODD_LARGE_H


def variation_exponent(kappa: int, hurst: float) -> float:
    """Exponent r such that n^r * (raw sum) has a nondegenerate limit."""
    r = regime(kappa, hurst)
    if r == EVEN:
        return kappa * hurst - 1.0
    if r == ODD_SMALL_H:
        return (kappa + 1) * hurst - 1.0
    if r == ODD_HALF:
        return (kappa - 1) / 2.0
    return (kappa - 1) * hurst


def scaled_variation(h, p: FbmPath, kappa: int, flow: FlowSolver | None = None,
                     x0: float = 0.0, expected_regime: str | None = None) -> float:
    got = regime(kappa, p.hurst)
    if expected_regime is not None and got != expected_regime:
        raise RegimeError(f"kappa={kappa}, H={p.hurst} falls in regime {got!r}, "
                          f"not {expected_regime!r}")
    raw = weighted_power_variation(h, p, kappa, flow, x0)
    return float(p.n) ** variation_exponent(kappa, p.hurst) * raw


def riemann_integral(h, p: FbmPath) -> float:
    """Left Riemann sum of h(B_s) over the path grid."""
    return float(np.mean(_weights_at(h, p, None, 0.0)))


def variation_limit(h, p: FbmPath, kappa: int) -> float:
    """Limit functional for the in-probability regimes, on this path.

    even kappa:            mu_kappa int_0^1 h(B_s) ds
    odd kappa, H < 1/2:   -mu_{kappa+1}/2 int_0^1 h'(B_s) ds
    odd kappa, H > 1/2:    mu_{kappa+1} int_0^{B_1} h(x) dx
    """
    h = _as_expr(h)
    r = regime(kappa, p.hurst)
    if r == EVEN:
        return gaussian_moment(kappa) * riemann_integral(h, p)
    if r == ODD_SMALL_H:
        return -0.5 * gaussian_moment(kappa + 1) * riemann_integral(differentiate(h), p)
    if r == ODD_LARGE_H:
        f = compile_expr(h)
        val, _ = integrate.quad(lambda x: float(f(x)), 0.0, p.endpoint,
                                epsabs=1e-12, epsrel=1e-12, limit=200)
        return gaussian_moment(kappa + 1) * val
    raise RegimeError("the H = 1/2, odd kappa limit holds in law only; "
                      "use variation_half_sample")


def variation_half_sample(g, p: FbmPath, kappa: int, wseed: int) -> float:
    """One draw of int g(B)(s_k dW + mu_{k+1} dB), forward sums, with W an
    independent Brownian motion generated from ``wseed`` and
    s_k = mixed_noise_scale(kappa)."""
    if p.hurst != 0.5 or kappa % 2 == 0:
        raise RegimeError("requires H = 1/2 and odd kappa")
    dw = standard_normals(make_rng(wseed), p.n) / np.sqrt(p.n)
    w = _weights_at(g, p, None, 0.0)
    return float(np.sum(w * (mixed_noise_scale(kappa) * dw
                             + gaussian_moment(kappa + 1) * p.increments)))


def s_statistic(f, p: FbmPath, q: int, k: int | None = None,
                flow: FlowSolver | None = None, x0: float = 0.0,
                exact: np.ndarray | None = None) -> float:
    """sum_{j<k} f(.) He_q(n^H dB_j), f evaluated at B or at phi(x0, B)."""
    if q < 2:
        raise ValueError("q must be >= 2")
    k = p.n if k is None else k
    if not 1 <= k <= p.n:
        raise ValueError(f"k must lie in [1, {p.n}]")
    w = _weights_at(f, p, flow, x0, exact)[:k]
    z = float(p.n) ** p.hurst * p.increments[:k]
    return float(np.sum(w * hermite(q, z)))
