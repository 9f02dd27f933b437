"""Command line: ``entrolab run | compare | constants``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

from ..errors import ConfigError, EntrolabError, SchemaMismatch
from ..models import build_model
from .config import load_config
from .runner import COMPARE_COLUMNS, OutputBusy, compare, render, run

EXIT_CONFIG = 64
EXIT_DATA = 65
EXIT_BUSY = 75


def _jobs(arg: int | None) -> int:
    env = os.environ.get("ENTROLAB_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ENTROLAB_JOBS: not an integer: {env!r}") from None
    return max(1, arg or 1)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="entrolab", description="Convex Sobolev verification lab")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the configured suites")
    r.add_argument("config")
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--jobs", type=int)
    c = sub.add_parser("compare", help="tabulate constants across reports")
    c.add_argument("reports", nargs="+")
    c.add_argument("--phi")
    k = sub.add_parser("constants", help="print the model's curvature constants")
    k.add_argument("config")
    return p


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed: must be nonnegative")
        config = dataclasses.replace(config, seed=args.seed)
    code, report = run(config, args.out, _jobs(args.jobs))
    for name, suite in report["suites"].items():
        print(f"{name:14s} {suite['status']}")
    if report["model"]["failed_hypothesis"]:
        print(f"hypothesis not satisfied: {report['model']['failed_hypothesis']}")
    return code


def _cmd_compare(args) -> int:
    rows = compare(args.reports, args.phi)
    wr = csv.writer(sys.stdout, lineterminator="\n")
    wr.writerow(COMPARE_COLUMNS)
    wr.writerows(rows)
    return 0


def _cmd_constants(args) -> int:
    config = load_config(args.config)
    kr = build_model(config.model).kappas
    view = {"kappa": kr.kappa, "kappa_1": kr.kappa_1, "alpha_slope": kr.alpha_slope,
            "alpha_offset": kr.alpha_offset, "kappa_bar": kr.kappa_bar, "implied": kr.implied,
            "hypotheses_ok": kr.hypotheses_ok, "failed_hypothesis": kr.failed_hypothesis,
            "extras": {k: v for k, v in kr.extras.items() if not callable(v)}}
    print(json.dumps(render(view), sort_keys=True, indent=2))
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handlers = {"run": _cmd_run, "compare": _cmd_compare, "constants": _cmd_constants}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemaMismatch as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OutputBusy as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_BUSY
    except EntrolabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
