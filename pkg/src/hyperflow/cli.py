"""Command-line front end.

Three subcommands move a case through its life cycle:

    hyperflow prep -f case.json
    hyperflow run  -f case.json [--nworkers N]
    hyperflow post -f case.json (--vtk | --slice B,FACE | --mms-norms)
    hyperflow post --scaling-fit timings.txt

Exit codes: 0 on success, 2 for an invalid configuration or usage, 3
when the march diverges, 4 for missing or corrupt files.
"""

import argparse
import sys

from . import advance as ad
from . import block as bk
from . import grid as gd
from . import sim
from .chemistry import MechanismError, StiffCellError
from .gas import GasConfigError
from .state import FlowDivergence

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _parser():
    p = argparse.ArgumentParser(
        prog="hyperflow",
        description="block-structured compressible-flow solver")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("prep", help="validate a case and write its "
                        "grids and initial flow")
    pp.add_argument("-f", "--file", required=True, metavar="CASE",
                    help="case JSON file")

    pr_ = sub.add_parser("run", help="march a prepped case in time")
    pr_.add_argument("-f", "--file", required=True, metavar="CASE",
                     help="case JSON file")
    pr_.add_argument("--nworkers", type=int, default=None,
                     help="worker threads (overrides the config)")

    po = sub.add_parser("post", help="post-process snapshots")
    po.add_argument("-f", "--file", metavar="CASE",
                    help="case JSON file")
    g = po.add_mutually_exclusive_group(required=True)
    g.add_argument("--vtk", action="store_true",
                   help="write legacy VTK files for every snapshot")
    g.add_argument("--slice", metavar="B,FACE",
                   help="print a boundary profile table")
    g.add_argument("--mms-norms", action="store_true",
                   help="print manufactured-solution error norms")
    g.add_argument("--scaling-fit", metavar="TIMINGS",
                   help="fit the scaling model to an `n time` table")
    return p


def _dispatch(args):
    if args.command == "prep":
        out_dir = sim.prep(args.file)
        print(f"prepared {out_dir}")
        return EXIT_OK
    if args.command == "run":
        if args.nworkers is not None and args.nworkers < 1:
            raise sim.ConfigError("--nworkers must be >= 1")
        sim.run(args.file, nworkers=args.nworkers)
        return EXIT_OK
    if args.command == "post":
        if args.scaling_fit:
            print(sim.post_scaling_fit(args.scaling_fit))
            return EXIT_OK
        if not args.file:
            raise sim.ConfigError("post needs -f CASE for this mode")
        if args.vtk:
            for path in sim.post_vtk(args.file):
                print(path)
            return EXIT_OK
        if args.slice:
            print(sim.post_slice(args.file, args.slice))
            return EXIT_OK
        print(sim.post_mms_norms(args.file))
        return EXIT_OK
    raise sim.ConfigError(f"unknown command {args.command!r}")


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (sim.ConfigError, bk.BlockConfigError, GasConfigError,
            MechanismError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FlowDivergence, ad.StepError, StiffCellError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (gd.GridError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main(argv=None))
