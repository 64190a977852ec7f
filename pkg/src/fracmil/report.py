"""Tables and figures for rate-experiment reports (matplotlib, Agg backend)."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SUMMARY_FIELDS = ("n", "paths", "median_abs_endpoint_error", "mean_endpoint_error",
                  "se_endpoint_error", "median_sup_error", "median_deviation",
                  "mean_deviation", "se_deviation", "median_abs_limit",
                  "mean_scaled_error", "median_sup_ratio")

PLOT_SCRIPT = '''\
import json, sys
import matplotlib.pyplot as plt

rep = json.load(open(sys.argv[1] if len(sys.argv) > 1 else "report.json"))
ns = [s["n"] for s in rep["summaries"]]
med = [s["median_abs_endpoint_error"] for s in rep["summaries"]]
plt.loglog(ns, med, "o-", base=2)
plt.xlabel("n")
plt.ylabel("median |error at t=1|")
plt.show()
'''


def dump_json(obj, path) -> None:
    """Deterministic JSON: sorted keys, NaN written as null."""
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_summary_csv(report: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for s in report["summaries"]:
            w.writerow(["" if s.get(k) is None else
                        (s[k] if isinstance(s[k], int) else f"{s[k]:.10g}")
                        for k in SUMMARY_FIELDS])


def plot_rates(report: dict, path) -> None:
    """log-log median |endpoint error| against n, with the fitted line."""
    ns = [s["n"] for s in report["summaries"]]
    med = [s["median_abs_endpoint_error"] for s in report["summaries"]]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(ns, med, "o", base=2, label="median |error|")
    fit = report.get("fit", {})
    if fit.get("slope") is not None:
        a, b = fit["slope"], fit["intercept"]
        ax.loglog(ns, [math.exp(b) * n ** a for n in ns], "-", base=2,
                  label=f"fit slope {a:.3f} ± {fit['slope_se']:.3f}")
    if fit.get("expected_slope") is not None and med[0] > 0:
        e = fit["expected_slope"]
        ax.loglog(ns, [med[0] * (n / ns[0]) ** e for n in ns], "--", base=2,
                  label=f"reference slope {e:.3f}")
    if report.get("degenerate"):
        ax.set_title("degenerate: exact scheme")
    ax.set_xlabel("n")
    ax.set_ylabel("|error at t = 1|")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_deviations(report: dict, path) -> bool:
    """Median |scaled error - limit| and median |limit| against n."""
    rows = [s for s in report["summaries"] if s.get("median_deviation") is not None]
    if not rows:
        return False
    ns = [s["n"] for s in rows]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.semilogx(ns, [s["median_deviation"] for s in rows], "o-", base=2,
                label="median |scaled error - limit|")
    ax.semilogx(ns, [s["median_abs_limit"] for s in rows], "s--", base=2,
                label="median |limit|")
    ax.set_xlabel("n")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def render(report: dict, out_dir) -> list:
    """Write summary.csv, figures and a standalone plotting script."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "summary.csv", out / "rates.png", out / "plot_report.py"]
    write_summary_csv(report, written[0])
    plot_rates(report, written[1])
    if plot_deviations(report, out / "deviations.png"):
        written.append(out / "deviations.png")
    written[2].write_text(PLOT_SCRIPT)
    return written
