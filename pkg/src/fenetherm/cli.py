"""Command line entry point: ``fenetherm run|check|equilibrium|report``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import driver
from .checkpoint import CorruptCheckpoint
from .config import ConfigError, load_config
from .thermo import COLUMNS


def _parser():
    p = argparse.ArgumentParser(prog="fenetherm", description="Non-isothermal FENE-type polymer flow solver.")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings such as clipping events")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("config", nargs="?", help="scenario file (omit with --resume)")
    r.add_argument("--output-dir", default=".", help="where CSV and checkpoints go")
    r.add_argument("--allow-unsafe-potential", action="store_true",
                   help="run even if the potential fails the structural checks")
    r.add_argument("--picard-iters", type=int, default=None, metavar="N",
                   help="Picard iterations for the conductivity (overrides heat.picard_iters)")
    r.add_argument("--strict", action="store_true", help="audit failures give a nonzero exit")
    r.add_argument("--resume", metavar="CHECKPOINT", help="continue from a checkpoint")
    r.add_argument("--t-end", type=float, default=None, help="with --resume, stop at this time")

    c = sub.add_parser("check", help="audit a checkpoint offline")
    c.add_argument("checkpoint")

    e = sub.add_parser("equilibrium", help="write the analytic rest state as a checkpoint")
    e.add_argument("config")
    e.add_argument("--output-dir", default=".")

    s = sub.add_parser("report", help="summarize a CSV written by run")
    s.add_argument("csv")
    s.add_argument("--energy-tol", type=float, default=5e-2, help="relative energy-equality tolerance")
    return p


def _print_report(rep):
    row = dict(zip(COLUMNS, rep.as_row()))
    for k in COLUMNS:
        print(f"{k:28s} {row[k]: .10e}")
    print(f"{'xi_rate':28s} {rep.xi_rate: .10e}")
    print(f"{'xi_min_cell':28s} {rep.xi_min_cell: .10e}")
    print(f"{'identity_residual':28s} {rep.identity_residual: .10e}")
    print(f"{'max_divergence':28s} {rep.max_divergence: .10e}")
    print(f"{'polymer_mass':28s} {rep.polymer_mass: .10e}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            if args.resume:
                res = driver.resume(args.resume, args.output_dir, args.t_end, args.picard_iters, args.strict)
            elif args.config:
                cfg = load_config(args.config)
                res = driver.run(cfg, args.output_dir, args.allow_unsafe_potential, args.picard_iters,
                                 args.strict)
            else:
                print("error: run needs a config file or --resume", file=sys.stderr)
                return driver.EXIT_CONFIG
            for msg in res.audit_failures[:20]:
                print(f"audit: {msg}", file=sys.stderr)
            if res.status != driver.EXIT_OK:
                print(f"error: {res.message}", file=sys.stderr)
            if res.csv_path:
                print(f"csv: {res.csv_path}")
            if res.checkpoint_path:
                print(f"checkpoint: {res.checkpoint_path}")
            return res.status

        if args.command == "check":
            _print_report(driver.check(args.checkpoint))
            return driver.EXIT_OK

        if args.command == "equilibrium":
            cfg = load_config(args.config)
            os.makedirs(args.output_dir, exist_ok=True)
            path = os.path.join(args.output_dir, f"{cfg.label}.equilibrium.pkin")
            driver.equilibrium(cfg, path)
            print(f"checkpoint: {path}")
            return driver.EXIT_OK

        summary = driver.summarize_csv(args.csv, energy_rel_tol=args.energy_tol)
        for name, ok, detail in summary.checks:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        print(f"{summary.rows} rows, {'all checks pass' if summary.passed else 'some checks fail'}")
        return driver.EXIT_OK if summary.passed else driver.EXIT_AUDIT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return driver.EXIT_CONFIG
    except CorruptCheckpoint as exc:
        print(f"corrupt checkpoint: {exc}", file=sys.stderr)
        return driver.EXIT_CORRUPT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return driver.EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
