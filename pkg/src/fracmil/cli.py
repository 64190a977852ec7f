"""Command-line front end.

    fracmil simulate  --config run.toml [--out path.csv]
    fracmil rates     --config run.toml --out DIR [--threads K]
    fracmil powervar  --config run.toml --out DIR
    fracmil ncweights N
    fracmil report    --config run.toml --out DIR     (or --from DIR)

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("fracmil")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, out_required: bool = False) -> None:
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", required=out_required, help="output file or directory")
    p.add_argument("--seed", type=int, help="override the configured base seed")
    p.add_argument("--threads", type=int, help="worker processes (default: all cores)")
    p.add_argument("--method", choices=("circulant", "cholesky", "auto"),
                   help="fBm sampler")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fracmil", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("simulate", help="one path: scheme vs exact solution"))
    _common(sub.add_parser("rates", help="rate experiment: JSON report + per-path CSV"),
            out_required=True)
    _common(sub.add_parser("powervar", help="weighted power variations against limits"),
            out_required=True)
    nc = sub.add_parser("ncweights", help="exact Newton-Cotes weights")
    nc.add_argument("N", type=int)
    rp = sub.add_parser("report", help="rate experiment rendered to tables and figures")
    rp.add_argument("--config", help="TOML run configuration")
    rp.add_argument("--from", dest="source", help="directory with an existing report.json")
    rp.add_argument("--out", required=True)
    rp.add_argument("--seed", type=int)
    rp.add_argument("--threads", type=int)
    rp.add_argument("--method", choices=("circulant", "cholesky", "auto"))
    return ap


def _load(args):
    from .config import load_config
    return load_config(args.config, seed=args.seed, method=args.method)


def _threads(args) -> int | None:
    from .mc import ConfigError
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be positive")
    return args.threads


def cmd_simulate(args) -> int:
    from .expr import Coefficient
    from .fbm import derive_seed, sample_path
    from .schemes import run_scheme
    cfg = _load(args).experiment
    n = cfg.n_list[-1]
    c = Coefficient(cfg.sigma)
    p = sample_path(cfg.hurst, n, derive_seed(cfg.seed, n, 0), cfg.method,
                    allow_large=True)
    run = run_scheme(c, cfg.scheme, cfg.x0, p)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            run.write_csv(fh)
        log.info("wrote %s", args.out)
    else:
        run.write_csv(sys.stdout)
    return EXIT_OK


def _rates(cfg, out: Path, threads):
    from .mc import run_rate_experiment
    from .report import dump_json
    out.mkdir(parents=True, exist_ok=True)
    rep = run_rate_experiment(cfg, threads)
    dump_json(rep.to_dict(), out / "report.json")
    with open(out / "paths.csv", "w", newline="") as fh:
        rep.write_records_csv(fh)
    return rep


def cmd_rates(args) -> int:
    run = _load(args)
    threads = _threads(args)
    rep = _rates(run.experiment, Path(args.out), threads)
    fit = rep.fit
    if fit.get("slope") is None:
        print(fit.get("note", "no fit"))
    else:
        print(f"slope {fit['slope']:.4f} +- {fit['slope_se']:.4f}"
              + (f" (reference {fit['expected_slope']:.4f})"
                 if "expected_slope" in fit else ""))
    for f in rep.failed:
        print(f"failed path seed {f['seed']} (n={f['n']}): {f['error']}", file=sys.stderr)
    return EXIT_OK


def cmd_powervar(args) -> int:
    from .mc import ConfigError, run_powervar_experiment
    from .report import dump_json
    run = _load(args)
    if run.powervar is None:
        raise ConfigError(f"{args.config}: no [powervar] table")
    res = run_powervar_experiment(run.powervar)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = res.pop("records")
    dump_json(res, out / "powervar.json")
    with open(out / "powervar.csv", "w", newline="") as fh:
        fh.write("seed,n,scaled,limit\n")
        for r in records:
            fh.write(f"{r['seed']},{r['n']},{r['scaled']:.17g},{r['limit']:.17g}\n")
    for s in res["summaries"]:
        if "ks" in s:
            ks = s["ks"]
            print(f"n={s['n']}: KS {ks['statistic']:.4f} threshold {ks['threshold']:.4f} "
                  f"{'reject' if ks['reject'] else 'accept'}")
        else:
            print(f"n={s['n']}: median deviation {s['median_deviation']:.6g}")
    return EXIT_OK


def cmd_ncweights(args) -> int:
    from .mc import ConfigError
    from .newton_cotes import nc_weights
    if args.N < 0:
        raise ConfigError("N must be nonnegative")
    print(nc_weights(args.N).format())
    return EXIT_OK


def cmd_report(args) -> int:
    from .mc import ConfigError
    from .report import render
    out = Path(args.out)
    if args.source:
        src = Path(args.source) / "report.json"
        if not src.is_file():
            raise ConfigError(f"report not found: {src}")
        rep = json.loads(src.read_text())
    elif args.config:
        run = _load(args)
        rep = _rates(run.experiment, out, _threads(args)).to_dict()
    else:
        raise ConfigError("report needs --config or --from")
    for path in render(rep, out):
        print(path)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "rates": cmd_rates, "powervar": cmd_powervar,
            "ncweights": cmd_ncweights, "report": cmd_report}


def main(argv=None) -> int:
    from .mc import ConfigError
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.debug("traceback", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
