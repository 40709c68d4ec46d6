"""Command-line driver: ``goafem run --problem zshape --p 1 ...``.

Writes ``convergence.csv``, mesh snapshots ``mesh_XXXX.txt`` and, unless
``--svg off``, ``mesh_XXXX.svg`` level plots and ``convergence.svg`` into the
output directory.  Exit status: 0 on success, 2 on usage errors, 1 on
runtime errors.
"""
import argparse
import os
import sys

from .driver import STRATEGIES, RunConfig, adaptive_steps
from .mesh import write_mesh
from .output import render_convergence_svg, render_level_svg, write_csv
from .problem import BUILTIN_PROBLEMS, builtin_problem

__all__ = ["build_parser", "cli_run", "main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _theta(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"theta must lie in (0, 1], got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _nonnegative_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be a nonnegative integer, got {text}")
    return v


def build_parser():
    parser = _Parser(prog="goafem", description="Adaptive and goal-oriented adaptive FEM runs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run one adaptive loop and write its outputs")
    r.add_argument("--problem", choices=BUILTIN_PROBLEMS, default="zshape")
    r.add_argument("--p", type=int, choices=(1, 2), default=1)
    r.add_argument("--strategy", choices=STRATEGIES, default="maximum")
    r.add_argument("--theta", type=_theta, default=0.5,
                   help="maximum-criterion parameter; Dörfler strategies use 1 - theta")
    r.add_argument("--cmin", type=_positive_float, default=1.0)
    r.add_argument("--max-dofs", type=_positive_int, default=50_000)
    r.add_argument("--max-iters", type=_nonnegative_int, default=60)
    r.add_argument("--out", default="run")
    r.add_argument("--snapshot-every", type=_nonnegative_int, default=0,
                   help="write a mesh snapshot every k-th iteration (0: final mesh only)")
    r.add_argument("--svg", choices=("on", "off"), default="on")
    r.add_argument("--timing", choices=("on", "off"), default="on",
                   help="'off' writes zero run times so outputs are byte-reproducible")
    return parser


def _snapshot(mesh, out, it, svg):
    stem = os.path.join(out, f"mesh_{it:04d}")
    write_mesh(mesh, stem + ".txt")
    if svg:
        render_level_svg(mesh, stem + ".svg")


def _run(args, parser):
    try:
        config = RunConfig(problem=args.problem, p=args.p, strategy=args.strategy,
                           theta=args.theta, c_min=args.cmin, max_dofs=args.max_dofs,
                           max_iterations=args.max_iters)
    except ValueError as exc:
        parser.error(str(exc))
    os.makedirs(args.out, exist_ok=True)
    svg = args.svg == "on"
    _, problem = builtin_problem(config.problem)
    records = []
    step = None
    for step in adaptive_steps(config, problem):
        rec = step.record
        records.append(rec)
        print(f"iter {rec.iter:3d}  #T {rec.ntri:8d}  ndof {rec.ndof:8d}  "
              f"eta^2 {rec.eta2:.4e}  eta*^2 {rec.eta_star2:.4e}  marked {rec.nmarked}")
        k = args.snapshot_every
        if k and rec.iter % k == 0 and step.marked is not None:
            _snapshot(step.mesh, args.out, rec.iter, svg)
    _snapshot(step.mesh, args.out, step.record.iter, svg)
    write_csv(records, os.path.join(args.out, "convergence.csv"), timing=args.timing == "on")
    if svg:
        render_convergence_svg(records, os.path.join(args.out, "convergence.svg"),
                               p=config.p, goal_oriented=config.goal_oriented)
    return 0


def cli_run(argv=None):
    """Parse ``argv`` and execute; returns the exit code."""
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        return _run(args, parser)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit status 1
        print(f"goafem: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_run())
