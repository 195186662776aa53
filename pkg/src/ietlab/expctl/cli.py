"""Command line: run, report, oracle.  Exit codes 0 ok, 1 runtime, 2 config, 3 budget."""

from __future__ import annotations

import argparse
import sys

from ..walks import BudgetExceeded
from .config import ConfigError
from .report import ReportError, report
from .runner import THREADS_ENV, oracle, run

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ietlab", description="Seeded random-walk experiments on IET groups.")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one experiment configuration")
    r.add_argument("config")
    r.add_argument("--out", required=True, help="output directory (records are appended)")
    r.add_argument("--seed", type=int, default=None, help="override walk.seed")
    r.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    s = sub.add_parser("report", help="summarize a records directory")
    s.add_argument("dir")
    o = sub.add_parser("oracle", help="exact E 2^-|O_n| and switch-walk-switch return probability")
    o.add_argument("config")
    o.add_argument("--n", type=int, required=True)
    o.add_argument("--budget", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.cmd == "run":
            if args.threads is not None and args.threads < 1:
                raise ConfigError("--threads must be positive")
            recs = run(args.config, args.out, args.seed, args.threads)
            print(f"{len(recs)} records appended to {args.out}/records.jsonl")
        elif args.cmd == "report":
            sys.stdout.write(report(args.dir))
        else:
            if args.n < 0:
                raise ConfigError("--n must be non-negative")
            res = oracle(args.config, args.n, args.budget)
            o, s = res["orbit_oracle"], res["sws_return"]
            print(f"n = {res['n']}  words = {res['words']}")
            print(f"E 2^-|O_n|        = {o}  ({float(o):.10g})")
            print(f"P(f_n = f_0) (SWS) = {s}  ({float(s):.10g})")
            for size, p in res["distribution"].items():
                print(f"  P(|O_n| = {size}) = {p}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as e:
        print(f"budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (ReportError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
