"""Command line interface.

Subcommands
-----------
run <config>
    Execute the example selected by a key = value config file.
example <ex1|ex2|ex3|ex4> [--set key=value]...
    Execute a packaged example with optional overrides.
mms --cycles N --beta B --alpha A [--mu M]
    Print the manufactured-solution convergence table to stdout.

Exit codes: 0 on success, 1 on a configuration error, 2 on a solver
failure. The output directory defaults to limitfrac_out, can be set
with --outdir, and the environment variable LIMITFRAC_OUTDIR overrides
both.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import apply_overrides, parse_config, parse_config_text
from .constitutive import ModelParams
from .errors import ConfigError, SolverError
from .examples import mms_ladder, run_example

_DEFAULT_OUTDIR = "limitfrac_out"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="limitfrac",
        description="anti-plane crack evolution in strain-limiting solids")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the example named in a config file")
    p_run.add_argument("config", help="path to a key = value config file")
    p_run.add_argument("--set", dest="sets", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config entry")
    p_run.add_argument("--outdir", default=None, help="output directory")

    p_ex = sub.add_parser("example", help="run a packaged example")
    p_ex.add_argument("name", choices=("ex1", "ex2", "ex3", "ex4"))
    p_ex.add_argument("--set", dest="sets", action="append", default=[],
                      metavar="KEY=VALUE", help="override a config entry")
    p_ex.add_argument("--outdir", default=None, help="output directory")

    p_mms = sub.add_parser("mms", help="manufactured-solution ladder to stdout")
    p_mms.add_argument("--cycles", type=int, default=6)
    p_mms.add_argument("--beta", type=float, default=0.0)
    p_mms.add_argument("--alpha", type=float, default=1.0)
    p_mms.add_argument("--mu", type=float, default=1.0)
    return parser


def _resolve_outdir(flag_value, example: str) -> str:
    base = os.environ.get("LIMITFRAC_OUTDIR")
    if base is None:
        base = flag_value if flag_value is not None else _DEFAULT_OUTDIR
    return os.path.join(base, example)


def _cmd_mms(args) -> int:
    params = ModelParams(mu=args.mu, alpha=args.alpha, beta=args.beta)
    data = mms_ladder(args.cycles, params)
    print("cycle,dofs,h,l2_error,rate")
    for k in range(len(data["errors"])):
        print("%d,%d,%.12e,%.12e,%.4f"
              % (k + 1, data["dofs"][k], data["hs"][k],
                 data["errors"][k], data["rates"][k]))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "mms":
            return _cmd_mms(args)
        if args.command == "run":
            cfg = parse_config(args.config)
        else:
            cfg = parse_config_text("run.example = %s" % args.name)
        if args.sets:
            cfg = apply_overrides(cfg, args.sets)
        outdir = _resolve_outdir(args.outdir, cfg.example)
        run_example(cfg, outdir)
        print("wrote %s" % outdir)
        return 0
    except ConfigError as err:
        print("config error: %s" % err, file=sys.stderr)
        return 1
    except SolverError as err:
        print("solver error: %s" % err, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
