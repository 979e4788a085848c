"""Command-line front-end.

::

    fedcausal simulate --case c1 --method xfbci --reps 10 --seed 7
    fedcausal dump --case c3 --seed 1 --out data/c3
    fedcausal analyze data/ehd/client_*.csv --outcome line_width --method xfbci

Exit status is 0 on success, 1 when a fit or I/O step fails at run time and
2 for configuration errors. Output goes to ``--out``, or to
``$FEDCAUSAL_OUT``, or to ``./results``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import defaults, pipeline, synth
from .baselines import DittoDiverged
from .causal import DegenerateDesign, NoControls, NoTreated
from .csvio import CsvFormatError, read_table, write_table
from .ep_engine import ClientFitError
from .metrics import METRICS, write_aggregate_csv, write_tidy_csv
from .sgld import NonFiniteIterate

OUT_ENV = "FEDCAUSAL_OUT"
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("fedcausal")

RUNTIME_ERRORS = (ClientFitError, DittoDiverged, NonFiniteIterate, NoTreated, NoControls,
                  DegenerateDesign, CsvFormatError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "results")


def _assignments(args) -> dict[str, str]:
    kv = {}
    if getattr(args, "config", None):
        kv.update(defaults.read_config_file(args.config))
    if getattr(args, "set", None):
        kv.update(defaults.parse_assignments(args.set, "--set"))
    return kv


def _settings(case: str, args) -> pipeline.MethodSettings:
    ep, ditto, extra = defaults.build(case, _assignments(args))
    return pipeline.MethodSettings(ep, ditto, central_lr=extra.get("lr"), caliper=args.caliper)


def _add_common(p):
    p.add_argument("--method", default="xfbci", choices=pipeline.METHODS)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--config", help="key=value file applied over the defaults")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
    p.add_argument("--caliper", type=float, default=None, help="drop treated units with no control within this score distance")
    p.add_argument("--add-intercept", action="store_true", help="append a constant-1 covariate before fitting")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fedcausal", description="Federated Bayesian propensity-score causal inference.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run replications of a benchmark case")
    sim.add_argument("--case", required=True, choices=synth.CASE_IDS)
    sim.add_argument("--reps", type=int, default=10)
    sim.add_argument("--jobs", type=int, default=1, help="replications run in parallel")
    sim.add_argument("--telemetry", action="store_true", help="write per-round EP telemetry (xfbci only)")
    _add_common(sim)

    dump = sub.add_parser("dump", help="write one generated world as CSV files")
    dump.add_argument("--case", required=True, choices=synth.CASE_IDS + ("ehd",))
    dump.add_argument("--seed", type=int, default=0)
    dump.add_argument("--add-intercept", action="store_true")
    dump.add_argument("--out", help="output directory")

    an = sub.add_parser("analyze", help="estimate effects on client CSV files")
    an.add_argument("files", nargs="+", help="one CSV per client")
    an.add_argument("--outcome", default="y")
    an.add_argument("--treatment", action="append", help="treatment column (repeatable; default every non-outcome column)")
    an.add_argument("--binarize", default="auto",
                    help="'median', a numeric threshold, or 'auto' (0/1 columns as is, otherwise median)")
    an.add_argument("--no-standardize", action="store_true", help="fit on covariates in their original units")
    _add_common(an)
    return parser


def _cmd_simulate(args) -> int:
    if args.reps < 1 or args.jobs < 1:
        raise UsageError("--reps and --jobs must be positive")
    settings = _settings(args.case, args)
    report, records = pipeline.simulate(args.case, args.method, args.reps, args.seed, settings,
                                        jobs=args.jobs, intercept=args.add_intercept,
                                        telemetry=args.telemetry and args.method == "xfbci")
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.case}_{args.method}"
    write_tidy_csv([report], out / f"{stem}_replications.csv")
    write_aggregate_csv([report], out / f"{stem}_aggregate.csv")
    if args.telemetry:
        _write_telemetry(records, out / f"{stem}_telemetry.csv")
    agg = report.aggregate()
    print(f"{args.case} {args.method}: {args.reps} replications in {report.runtime_seconds:.1f}s")
    for name in METRICS:
        mean, se = agg[name]
        print(f"  {name:13s} {mean:.4f}" + ("" if np.isnan(se) else f" (+/- {se:.4f})"))
    return EXIT_OK


def _write_telemetry(records, path: Path) -> None:
    d = len(records[0][1].tilted_mean) if records else 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["replication", "round", "client", "delta_eta_norm", "delta_lam_fro"]
                    + [f"tilted_mean_{j}" for j in range(1, d + 1)])
        for rep, rec in records:
            wr.writerow([rep, rec.round, rec.client_id, repr(rec.delta_eta_norm), repr(rec.delta_lam_fro)]
                        + [repr(v) for v in rec.tilted_mean])


def _cmd_dump(args) -> int:
    out = Path(args.out) if args.out else _out_dir(args) / f"{args.case}_seed{args.seed}"
    if args.case == "ehd":
        paths = [write_table(t, out / f"client_{k}.csv") for k, t in enumerate(synth.ehd_analog(args.seed), 1)]
    else:
        world = synth.generate(synth.case_spec(args.case, seed=args.seed, intercept=args.add_intercept))
        paths = synth.dump(world, out)
    print(f"wrote {len(paths)} files to {out}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    rule = args.binarize
    if rule not in ("auto", "median"):
        try:
            rule = float(rule)
        except ValueError:
            raise UsageError(f"--binarize must be 'auto', 'median' or a number, got {rule!r}") from None
    settings = _settings("analyze", args)
    tables = [read_table(p) for p in args.files]
    rows = pipeline.analyze(tables, args.outcome, args.treatment, args.method, settings, seed=args.seed,
                            rule=rule, standardize=not args.no_standardize, intercept=args.add_intercept)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"analyze_{args.method}.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["treatment", "client", "method", "ate", "mse_before", "mse_after", "n_pairs"])
        for r in rows:
            wr.writerow([r.treatment, r.client, r.method, repr(r.ate), repr(r.mse_before),
                         repr(r.mse_after), r.n_pairs])
    print(f"{'treatment':14s} {'client':>6s} {'ATE':>10s} {'Before':>10s} {'After':>10s}")
    for r in rows:
        print(f"{r.treatment:14s} {r.client:6d} {r.ate:10.4f} {r.mse_before:10.4f} {r.mse_after:10.4f}")
    return EXIT_OK


COMMANDS = {"simulate": _cmd_simulate, "dump": _cmd_dump, "analyze": _cmd_analyze}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fedcausal: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, defaults.ConfigError) as exc:
        print(f"fedcausal: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RUNTIME_ERRORS as exc:
        print(f"fedcausal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
