"""Newton-Cotes measures nu_N and the grid version of the NC integral."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .expr import compile_expr, parse_sigma
from .fbm import FbmPath


@dataclass(frozen=True)
class NCWeights:
    N: int
    nodes: tuple
    weights: tuple

    def moment(self, p: int) -> Fraction:
        """Exact integral of u^p against the measure."""
        return sum((w * a ** p for a, w in zip(self.nodes, self.weights)), Fraction(0))

    def format(self) -> str:
        return ", ".join(f"{a}: {w}" for a, w in zip(self.nodes, self.weights))


def _poly_mul(p, q):
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


@lru_cache(maxsize=None)
def nc_weights(N: int) -> NCWeights:
    """Exact rational weights of nu_N.

    nu_0 = delta_0, nu_1 = (delta_0 + delta_1)/2, and for N >= 2 the weight at
    j/(2N-2) is the integral over [0, 1] of the j-th Lagrange basis polynomial
    in the variable 2(N-1)u.
    """
    if N < 0:
        raise ValueError("N must be nonnegative")
    if N == 0:
        return NCWeights(0, (Fraction(0),), (Fraction(1),))
    if N == 1:
        return NCWeights(1, (Fraction(0), Fraction(1)), (Fraction(1, 2), Fraction(1, 2)))
    K = 2 * N - 2
    weights = []
    for j in range(K + 1):
        poly = [Fraction(1)]
        for k in range(K + 1):
            if k != j:
                # (K u - k) / (j - k)
                poly = _poly_mul(poly, [Fraction(-k, j - k), Fraction(K, j - k)])
        weights.append(sum(a / (i + 1) for i, a in enumerate(poly)))
    nodes = tuple(Fraction(j, K) for j in range(K + 1))
    return NCWeights(N, nodes, tuple(weights))


def smallest_order(hurst: float) -> int:
    """Smallest N >= 1 with H > 1/(4N + 2)."""
    if not 0.0 < hurst < 1.0:
        raise ValueError("Hurst index must lie in (0, 1)")
    N = 1
    while not hurst > 1.0 / (4 * N + 2):
        N += 1
    return N


def nc_functional_sum(f, p: FbmPath, N: int) -> float:
    """sum_l dB_l sum_a w_a f(B_l + a dB_l), the NC integral at eps = 1/n."""
    fn = compile_expr(parse_sigma(f) if isinstance(f, str) else f)
    nc = nc_weights(N)
    left, inc = p.values[:-1], p.increments
    inner = np.zeros_like(inc)
    for a, w in zip(nc.nodes, nc.weights):
        inner += float(w) * fn(left + float(a) * inc)
    return float(np.sum(inc * inner))
