import numpy as np
import pytest
from scipy import integrate

from fracmil.expr import Coefficient, compile_expr, g_function, h_function
from fracmil.fbm import FbmPath, derive_seed, sample_path
from fracmil.flow import FlowSolver
from fracmil.limits import (evaluate_limit, limit_even, limit_half_sample,
                            limit_odd_large_h, limit_odd_small_h,
                            odd_small_h_integrand, rate_exponent, scheme_regime,
                            space_integral)
from fracmil.powervar import EVEN, ODD_HALF, ODD_LARGE_H, ODD_SMALL_H, RegimeError

from conftest import close_on_grid, sympy_sigma


def test_regimes():
    assert scheme_regime(0, 0.7) == EVEN
    assert scheme_regime(1, 0.45) == ODD_SMALL_H
    assert scheme_regime(1, 0.5) == ODD_HALF
    assert scheme_regime(1, 0.7) == ODD_LARGE_H
    with pytest.raises(RegimeError, match=r"1/\(m\+2\)"):
        scheme_regime(0, 0.4)
    assert rate_exponent(0, 0.7) == pytest.approx(0.4)
    assert rate_exponent(2, 0.35) == pytest.approx(0.4)
    assert rate_exponent(1, 0.45) == pytest.approx(0.8)
    assert rate_exponent(1, 0.5) == 1.0
    assert rate_exponent(1, 0.7) == pytest.approx(1.4)


def test_constant_sigma_limits_vanish():
    c = Coefficient("2")
    assert limit_even(c, 0, 0.0, sample_path(0.7, 64, 1)) == 0
    assert limit_odd_small_h(c, 1, 0.0, sample_path(0.45, 64, 1)) == 0
    assert limit_odd_large_h(c, 1, 0.0, sample_path(0.7, 64, 1)) == 0
    assert limit_half_sample(c, 1, 0.0, sample_path(0.5, 64, 1), 3) == 0


def test_regime_gates(ref_coeff):
    with pytest.raises(RegimeError):
        limit_even(ref_coeff, 1, 0.0, sample_path(0.7, 8, 1))
    with pytest.raises(RegimeError):
        limit_odd_large_h(ref_coeff, 1, 0.0, sample_path(0.45, 8, 1))


def test_even_m0_matches_direct_formula(ref_coeff, ref_flow):
    p = sample_path(0.7, 512, 2)
    X = ref_flow.path(0.0, p.values)
    want = -(2 + np.sin(X[-1])) / 2 * np.mean(np.cos(X[:-1]))
    assert limit_even(ref_coeff, 0, 0.0, p, ref_flow) == pytest.approx(want)


def test_engineered_constant_h():
    # affine sigma = a x + b gives h_0 = -a/2; elliptic on the probed window
    c = Coefficient("0.5*x+3", probe=(-5.0, 5.0))
    p = sample_path(0.7, 64, 1)
    X = FlowSolver(c).path(0.0, p.values)
    assert limit_even(c, 0, 0.0, p) == pytest.approx((0.5 * X[-1] + 3) * -0.25)


def test_odd_small_h_integrand_symbolic():
    # g_1 - sigma h_1'/2 = +(3 s'^3 + 6 s s' s'' + s^2 s''') / 24
    import sympy as sp
    for text in ("2+sin(x)", "1.5+0.5*tanh(x)"):
        c = Coefficient(text)
        x, s = sympy_sigma(text)
        d = [sp.diff(s, x, k) for k in range(4)]
        ref = (3 * d[1] ** 3 + 6 * s * d[1] * d[2] + s ** 2 * d[3]) / 24
        assert close_on_grid(compile_expr(odd_small_h_integrand(c, 1)),
                             sp.lambdify(x, ref, "numpy"))


def test_large_h_space_integral_oracles(ref_coeff, ref_flow):
    # B_1 = 1: quadrature in y through the flow, and Richardson refinement
    p = FbmPath(0.7, 2, [0.0, 0.4, 1.0])
    h1 = compile_expr(h_function(ref_coeff, 1))
    y_int, _ = integrate.quad(lambda y: float(h1(ref_flow.eval(0.0, y))), 0, 1,
                              epsabs=1e-12, epsrel=1e-12)
    x1 = ref_flow.eval(0.0, 1.0)
    assert space_integral(ref_coeff, 1, 0.0, x1) == pytest.approx(y_int, abs=1e-9)
    ys = [np.linspace(0, 1, k + 1) for k in (256, 512)]
    simpson = [integrate.simpson(h1(ref_flow.eval(0.0, y)), x=y) for y in ys]
    rich = simpson[1] + (simpson[1] - simpson[0]) / 15
    assert y_int == pytest.approx(rich, abs=1e-9)
    want = 3 * (2 + np.sin(x1)) * y_int
    assert limit_odd_large_h(ref_coeff, 1, 0.0, p, ref_flow) == pytest.approx(want, abs=1e-9)
    assert limit_odd_large_h(ref_coeff, 1, 0.0, FbmPath(0.7, 2, [0.0, 0.5, 0.0])) == 0


def test_half_sample_conditional_mean(ref_coeff, ref_flow):
    p = sample_path(0.5, 256, 7)
    draws = np.array([limit_half_sample(ref_coeff, 1, 0.0, p, derive_seed(5, i), ref_flow)
                      for i in range(1000)])
    X = ref_flow.path(0.0, p.values)
    h = compile_expr(h_function(ref_coeff, 1))(X[:-1])
    g = compile_expr(g_function(ref_coeff, 1))(X[:-1])
    want = (2 + np.sin(X[-1])) * (3 * np.sum(h * p.increments) + 3 * np.mean(g))
    assert abs(draws.mean() - want) < 4 * draws.std() / np.sqrt(draws.size)


def test_dispatch(ref_coeff):
    p = sample_path(0.5, 64, 1)
    with pytest.raises(ValueError):
        evaluate_limit(ref_coeff, 1, 0.0, p)
    ev = evaluate_limit(ref_coeff, 1, 0.0, p, wseed=4)
    assert ev.regime == ODD_HALF and ev.seed == 1
