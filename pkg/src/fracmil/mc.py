"""Monte Carlo harness: scheme errors, limit functionals, rate fits, KS tests.

Every path is identified by a 64-bit seed derived from (base seed, n, path
index), so a report does not depend on how paths are split across workers.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .expr import Coefficient
from .fbm import FbmPath, derive_seed, sample_path, sample_values
from .flow import FlowSolver
from .limits import evaluate_limit, rate_exponent, scheme_regime
from .powervar import ODD_HALF, RegimeError
from .schemes import (CRANK_NICHOLSON, MILSTEIN, SchemeSpec,
                      crank_nicholson_values, milstein_values)

log = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-10
RECORD_FIELDS = ("seed", "n", "endpoint_error", "scaled_error", "limit_value",
                 "deviation")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    sigma: str
    hurst: float
    n_list: tuple
    paths: int
    seed: int
    x0: float = 0.0
    scheme: SchemeSpec = field(default_factory=SchemeSpec)
    method: str = "circulant"
    batch: int = 100
    alpha: float = 0.01
    out: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if not 0.0 < self.hurst < 1.0:
            raise ConfigError(f"hurst must lie in (0, 1), got {self.hurst}")
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ConfigError("n list must hold positive integers")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ConfigError(f"n list must be strictly increasing: {list(self.n_list)}")
        if self.paths < 1:
            raise ConfigError("paths must be positive")
        if self.batch < 1:
            raise ConfigError("batch must be positive")
        if self.scheme.kind == MILSTEIN:
            m = self.scheme.m
            if not 1.0 / (m + 2) < self.hurst < 1.0:
                raise ConfigError(
                    f"H = {self.hurst} is not admissible for the size-{m} scheme: "
                    f"the convergence theorem requires 1/(m+2) < H < 1, "
                    f"i.e. {1.0 / (m + 2):.6g} < H < 1")

    @property
    def regime(self) -> str | None:
        if self.scheme.kind != MILSTEIN:
            return None
        return scheme_regime(self.scheme.m, self.hurst)

    @property
    def exponent(self) -> float | None:
        if self.scheme.kind != MILSTEIN:
            return None
        return rate_exponent(self.scheme.m, self.hurst)

    def path_seed(self, n: int, i: int) -> int:
        return derive_seed(self.seed, n, i)

    def w_seed(self, n: int, i: int) -> int:
        return derive_seed(self.seed, n, i, 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_list"] = list(self.n_list)
        return d


# ---------------------------------------------------------------------------
# statistics


def regress_loglog(pairs):
    """OLS of log(statistic) on log(n): returns (slope, intercept, slope SE)."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError("need at least three (n, statistic) points")
    n = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    if np.any(y <= 0) or np.any(n <= 0):
        raise ValueError("log-log regression needs positive values")
    lx, ly = np.log(n), np.log(y)
    xc = lx - lx.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (ly - ly.mean())) / sxx
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    dof = len(pairs) - 2
    se = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else math.nan
    return slope, intercept, se


@dataclass(frozen=True)
class KSResult:
    statistic: float
    threshold: float
    alpha: float
    reject: bool


def ks_two_sample(a, b, alpha: float = 0.01) -> KSResult:
    """Two-sample Kolmogorov-Smirnov statistic with the asymptotic
    threshold c(alpha) sqrt((na + nb) / (na nb)), c = sqrt(-ln(alpha/2)/2)."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    c = math.sqrt(-math.log(alpha / 2.0) / 2.0)
    thr = c * math.sqrt((a.size + b.size) / (a.size * b.size))
    return KSResult(d, thr, alpha, d > thr)


# ---------------------------------------------------------------------------
# per-path work


def _process_chunk(cfg: ExperimentConfig, n: int, indices) -> list:
    c = Coefficient(cfg.sigma)
    flow = FlowSolver(c)
    seeds = [cfg.path_seed(n, i) for i in indices]
    values = sample_values(cfg.hurst, n, seeds, cfg.method, allow_large=True)
    try:
        return _records(cfg, c, flow, n, indices, seeds, values)
    except Exception:
        if len(indices) == 1:
            raise
    # isolate the failing paths
    out = []
    for i, s, v in zip(indices, seeds, values):
        try:
            out.extend(_records(cfg, c, flow, n, [i], [s], v[None, :]))
        except Exception as exc:  # recorded, excluded from statistics
            log.warning("path seed %d (n=%d) failed: %s", s, n, exc)
            out.append({"seed": s, "n": n, "index": i, "failed": str(exc)})
    return out


def _records(cfg, c, flow, n, indices, seeds, values) -> list:
    exact = flow.path(cfg.x0, values)
    if cfg.scheme.kind == MILSTEIN:
        approx = milstein_values(c, cfg.scheme.m, cfg.x0, values)
    else:
        approx, _ = crank_nicholson_values(c, cfg.x0, values, cfg.scheme.tol,
                                           cfg.scheme.max_iter)
    r = cfg.exponent
    out = []
    for row, (i, s) in enumerate(zip(indices, seeds)):
        err = float(approx[row, -1] - exact[row, -1])
        rec = {"seed": s, "n": n, "index": i, "endpoint_error": err,
               "sup_error": float(np.max(np.abs(approx[row] - exact[row]))),
               "max_increment": float(np.max(np.abs(np.diff(values[row]))))}
        if r is not None:
            p = FbmPath(cfg.hurst, n, values[row], s, cfg.method)
            wseed = cfg.w_seed(n, i) if cfg.regime == ODD_HALF else None
            lim = evaluate_limit(c, cfg.scheme.m, cfg.x0, p, wseed, flow,
                                 exact[row]).value
            scaled = float(n) ** r * err
            rec.update(scaled_error=scaled, limit_value=lim,
                       deviation=abs(scaled - lim))
            if wseed is not None:
                rec["w_seed"] = wseed
        else:
            rec.update(scaled_error=math.nan, limit_value=math.nan,
                       deviation=math.nan)
        out.append(rec)
    return out


def _run_chunks(cfg: ExperimentConfig, n: int, workers: int) -> list:
    chunks = [list(range(k, min(k + cfg.batch, cfg.paths)))
              for k in range(0, cfg.paths, cfg.batch)]
    if workers <= 1 or len(chunks) == 1:
        results = [_process_chunk(cfg, n, ch) for ch in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_process_chunk, [cfg] * len(chunks),
                                  [n] * len(chunks), chunks))
    return [rec for chunk in results for rec in chunk]


def collect_records(cfg: ExperimentConfig, n: int, workers: int | None = None) -> list:
    """Per-path records at one grid size, in path-index order."""
    workers = workers or os.cpu_count() or 1
    return _run_chunks(cfg, n, workers)


# ---------------------------------------------------------------------------
# reports


@dataclass
class ExperimentReport:
    config: dict
    regime: str | None
    rate_exponent: float | None
    summaries: list
    fit: dict
    ks: list
    failed: list
    degenerate: bool
    metadata: dict
    records: list = field(default_factory=list, repr=False)

    def to_dict(self, with_records: bool = False) -> dict:
        d = {k: getattr(self, k) for k in ("config", "regime", "rate_exponent",
                                           "summaries", "fit", "ks", "failed",
                                           "degenerate", "metadata")}
        if with_records:
            d["records"] = self.records
        return d

    def write_records_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for rec in self.records:
            if "failed" in rec:
                continue
            w.writerow([rec["seed"], rec["n"]] +
                       [f"{rec[k]:.17g}" for k in RECORD_FIELDS[2:]])


def _se(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan


def _finite_or_none(v):
    return None if v is None or not math.isfinite(v) else float(v)


def summarize(cfg: ExperimentConfig, n: int, recs: list) -> dict:
    good = [r for r in recs if "failed" not in r]
    err = np.array([r["endpoint_error"] for r in good])
    dev = np.array([r["deviation"] for r in good])
    lim = np.array([r["limit_value"] for r in good])
    sc = np.array([r["scaled_error"] for r in good])
    ratio = np.array([r["sup_error"] / (n * r["max_increment"] ** (cfg.scheme.m + 2))
                      for r in good]) if cfg.scheme.kind == MILSTEIN else np.array([])
    out = {
        "n": n,
        "paths": len(good),
        "median_abs_endpoint_error": float(np.median(np.abs(err))),
        "mean_endpoint_error": float(np.mean(err)),
        "se_endpoint_error": _se(err),
        "median_sup_error": float(np.median([r["sup_error"] for r in good])),
    }
    if cfg.exponent is not None:
        out.update(
            median_deviation=_finite_or_none(float(np.median(dev))),
            mean_deviation=_finite_or_none(float(np.mean(dev))),
            se_deviation=_finite_or_none(_se(dev)),
            median_abs_limit=_finite_or_none(float(np.median(np.abs(lim)))),
            mean_scaled_error=_finite_or_none(float(np.mean(sc))),
            median_sup_ratio=_finite_or_none(float(np.median(ratio))),
        )
    return out


def run_rate_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Scheme error and limit functional on every path for every n."""
    started = time.perf_counter()
    workers = workers or os.cpu_count() or 1
    records, summaries, ks, failed = [], [], [], []
    for n in cfg.n_list:
        log.info("n = %d: %d paths", n, cfg.paths)
        recs = _run_chunks(cfg, n, workers)
        records.extend(recs)
        failed.extend({"seed": r["seed"], "n": n, "error": r["failed"]}
                      for r in recs if "failed" in r)
        summaries.append(summarize(cfg, n, recs))
        if cfg.regime == ODD_HALF:
            good = [r for r in recs if "failed" not in r]
            res = ks_two_sample([r["scaled_error"] for r in good],
                                [r["limit_value"] for r in good], cfg.alpha)
            ks.append({"n": n, **asdict(res)})
    meds = [(s["n"], s["median_abs_endpoint_error"]) for s in summaries]
    degenerate = all(m <= DEGENERATE_TOL for _, m in meds)
    if degenerate:
        fit = {"slope": None, "intercept": None, "slope_se": None,
               "note": "degenerate: exact scheme"}
    elif len(meds) >= 3:
        slope, intercept, se = regress_loglog(meds)
        fit = {"slope": slope, "intercept": intercept, "slope_se": se}
        if cfg.exponent is not None:
            fit["expected_slope"] = -cfg.exponent
    else:
        fit = {"slope": None, "intercept": None, "slope_se": None,
               "note": "fewer than three grid sizes"}
    import numba
    import scipy
    meta = {
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "path_seeds": "SeedSequence(seed, spawn_key=(n, index)) -> Philox key",
        "wall_time_s": time.perf_counter() - started,
    }
    return ExperimentReport(cfg.to_dict(), cfg.regime, cfg.exponent, summaries,
                            fit, ks, failed, degenerate, meta, records)


def pathwise_limit_check(cfg: ExperimentConfig, n: int, workers: int | None = None):
    """Per-path |n^r (X^_1 - X_1) - L(path)| and its median at one n."""
    if cfg.scheme.kind != MILSTEIN:
        raise RegimeError("pathwise limits exist for Milstein-type schemes only")
    if cfg.regime == ODD_HALF:
        raise RegimeError("at H = 1/2 with m odd the limit holds in law only")
    recs = [r for r in collect_records(cfg, n, workers) if "failed" not in r]
    dev = np.array([r["deviation"] for r in recs])
    return dev, float(np.median(dev))


# ---------------------------------------------------------------------------
# weighted power variations


@dataclass(frozen=True)
class PowerVarConfig:
    weight: str
    kappa: int
    hurst: float
    n_list: tuple
    paths: int
    seed: int
    method: str = "circulant"
    alpha: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if self.kappa < 1:
            raise ConfigError("kappa must be >= 1")
        if not 0.0 < self.hurst < 1.0:
            raise ConfigError(f"hurst must lie in (0, 1), got {self.hurst}")
        if not self.n_list or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ConfigError("n list must be nonempty and strictly increasing")
        if self.paths < 1:
            raise ConfigError("paths must be positive")


def run_powervar_experiment(cfg: PowerVarConfig) -> dict:
    """Scaled weighted power variation against its limit, per path and per n.

    In the in-probability regimes the per-path deviation is summarized by its
    median; at H = 1/2 with odd kappa the scaled sums are compared in law with
    fresh draws of the mixed Gaussian limit.
    """
    from .powervar import (regime, scaled_variation, variation_exponent,
                           variation_half_sample, variation_limit)
    started = time.perf_counter()
    reg = regime(cfg.kappa, cfg.hurst)
    summaries, records = [], []
    for n in cfg.n_list:
        scaled, limit = [], []
        for i in range(cfg.paths):
            s = derive_seed(cfg.seed, n, i)
            p = sample_path(cfg.hurst, n, s, cfg.method, allow_large=True)
            v = scaled_variation(cfg.weight, p, cfg.kappa)
            if reg == ODD_HALF:
                lim = variation_half_sample(cfg.weight, p, cfg.kappa,
                                            derive_seed(cfg.seed, n, i, 1))
            else:
                lim = variation_limit(cfg.weight, p, cfg.kappa)
            scaled.append(v)
            limit.append(lim)
            records.append({"seed": s, "n": n, "scaled": v, "limit": lim})
        scaled, limit = np.array(scaled), np.array(limit)
        summ = {"n": n, "paths": cfg.paths,
                "mean_scaled": float(scaled.mean()), "se_scaled": _se(scaled)}
        if reg == ODD_HALF:
            summ["ks"] = asdict(ks_two_sample(scaled, limit, cfg.alpha))
        else:
            summ["median_deviation"] = float(np.median(np.abs(scaled - limit)))
        summaries.append(summ)
    return {"config": asdict(cfg) | {"n_list": list(cfg.n_list)},
            "regime": reg,
            "exponent": variation_exponent(cfg.kappa, cfg.hurst),
            "summaries": summaries,
            "records": records,
            "metadata": {"version": __version__,
                         "wall_time_s": time.perf_counter() - started}}


def strictly_decreasing(values) -> bool:
    v = list(values)
    return all(b < a for a, b in zip(v, v[1:]))
