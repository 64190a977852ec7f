"""Acceptance criteria at their stated sample sizes and tolerances.

Every test prints one ``[PASS]``/``[FAIL]`` line; the lines are repeated in
the terminal summary.  Run standalone with ``python tests/test_acceptance.py``.
"""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from fracmil.cli import main as cli_main
from fracmil.expr import Coefficient
from fracmil.fbm import derive_seed, sample_path
from fracmil.flow import FlowSolver, group_violation, taylor_remainder_slope
from fracmil.mc import (ExperimentConfig, PowerVarConfig, run_powervar_experiment,
                        run_rate_experiment, strictly_decreasing)
from fracmil.newton_cotes import nc_functional_sum, nc_weights
from fracmil.powervar import s_statistic
from fracmil.schemes import CRANK_NICHOLSON, SchemeSpec, run_scheme

SIGMA = "2+sin(x)"
SEED = 20261017
RATE_NS = [2 ** k for k in range(8, 14)]
RESULTS = []


def record(cid, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {cid}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


_REPORTS = {}


def rate_report(m, H, kind="milstein_type"):
    key = (m, H, kind)
    if key not in _REPORTS:
        cfg = ExperimentConfig(SIGMA, H, RATE_NS, 200, SEED, scheme=SchemeSpec(kind, m=m))
        t = time.perf_counter()
        rep = run_rate_experiment(cfg)
        _REPORTS[key] = (rep, time.perf_counter() - t)
    return _REPORTS[key]


@pytest.mark.parametrize("cid,m,H", [("C1", 0, 0.7), ("C2", 2, 0.35),
                                     ("C3", 1, 0.45), ("C4", 1, 0.7)])
def test_rates(cid, m, H):
    rep, wall = rate_report(m, H)
    target = rep.fit["expected_slope"]
    slope = rep.fit["slope"]
    ok = abs(slope - target) <= 0.10
    detail = (f"m={m} H={H} slope {slope:.4f} +- {rep.fit['slope_se']:.4f}, "
              f"target {target:.2f} +- 0.10, wall {wall:.1f}s")
    if cid == "C1":
        ok = ok and wall < 120
    record(cid, ok, detail)


@pytest.mark.parametrize("m,H", [(0, 0.7), (1, 0.45), (1, 0.7)])
def test_pathwise_limit(m, H):
    rep, _ = rate_report(m, H)
    by_n = {s["n"]: s for s in rep.summaries}
    d10, d13 = by_n[2 ** 10]["median_deviation"], by_n[2 ** 13]["median_deviation"]
    lim = by_n[2 ** 13]["median_abs_limit"]
    ok = d13 < d10 and d13 < 0.25 * lim
    record("C5", ok, f"m={m} H={H} median dev {d10:.4g} (2^10) -> {d13:.4g} (2^13), "
                     f"bound 0.25*median|L| = {0.25 * lim:.4g}")


def test_mixed_law_half():
    cfg = ExperimentConfig(SIGMA, 0.5, [2 ** 12], 2000, SEED, scheme=SchemeSpec(m=1))
    rep = run_rate_experiment(cfg)
    ks = rep.ks[0]
    scaled = [r["scaled_error"] for r in rep.records]
    limit = [r["limit_value"] for r in rep.records]
    p = stats.ks_2samp(scaled, limit).pvalue
    record("C6", not ks["reject"],
           f"KS {ks['statistic']:.4f} vs threshold {ks['threshold']:.4f} "
           f"(alpha 0.01; scipy p = {p:.3f})")


PW_NS = [2 ** k for k in range(9, 14)]


@pytest.mark.parametrize("kappa,H", [(2, 0.3), (2, 0.5), (2, 0.7), (3, 0.4), (3, 0.7)])
def test_power_variation_in_probability(kappa, H):
    res = run_powervar_experiment(PowerVarConfig("2+cos(x)", kappa, H, PW_NS, 100, SEED))
    meds = [s["median_deviation"] for s in res["summaries"]]
    record("C7", strictly_decreasing(meds),
           f"power variation kappa={kappa} H={H} ({res['regime']}) medians "
           + " ".join(f"{v:.4g}" for v in meds))


def test_power_variation_in_law():
    res = run_powervar_experiment(PowerVarConfig("2+cos(x)", 3, 0.5, [2 ** 11], 2000, SEED))
    ks = res["summaries"][0]["ks"]
    record("C7", not ks["reject"], f"power variation kappa=3 H=0.5 KS {ks['statistic']:.4f} "
                                   f"vs threshold {ks['threshold']:.4f}")


def test_s_statistic_bound():
    q, H = 3, 0.45
    ns = [2 ** k for k in range(8, 13)]
    ratios = []
    for n in ns:
        vals = np.array([s_statistic("2+cos(x)", sample_path(H, n, derive_seed(SEED, n, i)), q)
                         for i in range(1000)])
        ratios.append(np.mean(vals ** 2) / n ** max(1.0, 2 - 2 * H * q))
    rho, p = stats.spearmanr(ns, ratios, alternative="greater")
    record("C7", not p < 0.05, "E|S_n|^2 / n ratios " + " ".join(f"{r:.4g}" for r in ratios)
           + f", Spearman rho {rho:.2f} p {p:.3f}")


def test_sup_error_bound():
    ns = [2 ** k for k in range(8, 13)]
    cfg = ExperimentConfig(SIGMA, 0.45, ns, 100, SEED, scheme=SchemeSpec(m=1))
    rep = run_rate_experiment(cfg)
    meds = [s["median_sup_ratio"] for s in rep.summaries]
    rho, p = stats.spearmanr(ns, meds, alternative="greater")
    record("C8", not p < 0.05, "median sup_error/(n D^3) " + " ".join(f"{v:.4g}" for v in meds)
           + f", Spearman rho {rho:.2f} p {p:.3f}")


def test_flow_taylor_remainder():
    fs = FlowSolver(Coefficient(SIGMA), atol=1e-15, rtol=1e-15)
    ys = [2.0 ** -k for k in range(4, 11)]
    slopes = {(m, x): taylor_remainder_slope(fs, x, m, ys)[0]
              for m in (0, 1, 2) for x in (-1.0, 0.0, 1.0)}
    ok = all(abs(s - (m + 4)) <= 0.3 for (m, _), s in slopes.items())
    record("C9", ok, " ".join(f"m{m}x{x:+.0f}:{s:.2f}" for (m, x), s in slopes.items()))


def test_group_property():
    fs = FlowSolver(Coefficient(SIGMA))
    x, y, z = np.random.default_rng(SEED).uniform(-3, 3, (3, 100))
    worst = float(np.max(group_violation(fs, x, y, z)))
    record("C10", worst <= 1e-9, f"max violation {worst:.3g} over 100 triples")


def test_newton_cotes():
    exact = all(nc_weights(N).moment(p) == Fraction(1, p + 1)
                for N in range(6) for p in range(max(2 * N - 1, 0) + 1))
    meds = []
    for n in [2 ** k for k in range(9, 14)]:
        d = []
        for i in range(50):
            p = sample_path(0.6, n, derive_seed(SEED, n, i))
            d.append(abs(nc_functional_sum("cos(x)", p, 1) - math.sin(p.endpoint)))
        meds.append(float(np.median(d)))
    record("C11", exact and strictly_decreasing(meds),
           f"exact moments N<=5: {exact}; Ito medians " + " ".join(f"{v:.3g}" for v in meds))


def test_crank_nicholson_rate():
    rep, _ = rate_report(0, 0.45, CRANK_NICHOLSON)
    s = rep.fit["slope"]
    record("C12", s <= -0.70, f"slope {s:.4f} +- {rep.fit['slope_se']:.4f} (need <= -0.70)")


def test_constant_sigma_exact():
    c = Coefficient("2")
    flow = FlowSolver(c)
    worst, cases = 0.0, 0
    for H in (0.35, 0.45, 0.5, 0.7, 0.9):
        p = sample_path(H, 1024, derive_seed(SEED, 1024, 0))
        specs = [SchemeSpec(m=m) for m in range(6) if 1 / (m + 2) < H]
        specs.append(SchemeSpec(CRANK_NICHOLSON))
        for spec in specs:
            worst = max(worst, abs(run_scheme(c, spec, 0.0, p, flow).endpoint_error))
            cases += 1
    record("C13", worst <= 1e-10, f"max |endpoint error| {worst:.3g} over {cases} (m, H) cases")


def test_determinism(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('sigma = "2+sin(x)"\nH = 0.45\nn = [128, 256, 512]\npaths = 20\n'
                   f'seed = {SEED}\n[scheme]\nm = 1\n')
    texts = []
    for run, threads in (("a", "1"), ("b", "2")):
        out = tmp_path / run
        assert cli_main(["rates", "--config", str(cfg), "--out", str(out),
                         "--threads", threads]) == 0
        doc = json.loads((out / "report.json").read_text())
        doc["metadata"].pop("wall_time_s")
        texts.append((json.dumps(doc, sort_keys=True), (out / "paths.csv").read_bytes()))
    record("C14", texts[0] == texts[1], "report.json (minus wall time) and paths.csv "
                                        "identical across runs with 1 and 2 workers")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
