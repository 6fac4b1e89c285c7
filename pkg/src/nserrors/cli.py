"""Command line interface: ``nserrors <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

import argparse
import json
import sys

import numpy as np

from . import io
from .errors import ci_from_replications
from .experiments import (
    TableSpec,
    diagram_data,
    dimension_sweep,
    estimate_errors,
    run_coverage,
    run_table,
)
from .problems import Estimand, Problem
from .run import validate_run
from .sampler import SamplerConfig, TerminationRule, run_perfect_ns


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _global_options(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(None), help="base random seed")
    parser.add_argument("--jobs", type=int, default=default(1), help="worker processes")
    parser.add_argument("--format", choices=("csv", "json"), default=default("csv"), help="table output format")


def _problem_options(parser):
    parser.add_argument("--family", choices=("gaussian", "cauchy", "constant"), default="gaussian")
    parser.add_argument("--dim", type=int, default=3)
    parser.add_argument("--sigma-pi", type=float, default=10.0, help="prior standard deviation")
    parser.add_argument("--tracked", type=int, default=1, help="parameter components to store")


def build_parser():
    parser = _Parser(prog="nserrors", description="Perfect nested sampling and sampling-error estimates")
    _global_options(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a perfect nested sampling run")
    _problem_options(p)
    p.add_argument("--nlive", type=int, default=200)
    term = p.add_mutually_exclusive_group()
    term.add_argument("--term-eps", type=float, default=1e-4, help="stop when live evidence < eps * dead evidence")
    term.add_argument("--term-logl", type=float, help="stop at this likelihood contour instead")
    p.add_argument("--keep-final-live", action="store_true")
    p.add_argument("-o", "--output", required=True, help="run file (.json or .npz)")

    p = sub.add_parser("analyze", parents=[common], help="error estimates from one run file")
    p.add_argument("run")
    p.add_argument("--method", action="append", choices=("bootstrap", "simulated_weights", "split_runs"))
    p.add_argument("--estimand", action="append", help="e.g. logz, param-mean, param-cred-upper:0.84")
    p.add_argument("--B", type=int, default=200, help="bootstrap replications")
    p.add_argument("--M", type=int, default=200, help="simulated weight draws")
    p.add_argument("--N", type=int, default=20, help="split-runs groups")
    p.add_argument("--alpha", type=float, help="add a bootstrap interval at this tail probability")
    p.add_argument("-o", "--output")

    for name, text in (("table", "error table from a spec file"), ("coverage", "bootstrap coverage from a spec file")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("spec")
        p.add_argument("-o", "--output")

    p = sub.add_parser("sweep", parents=[common], help="errors across dimensions")
    p.add_argument("--family", choices=("gaussian", "cauchy"), default="gaussian")
    p.add_argument("--dims", default="2,5,10,20,50")
    p.add_argument("--nlive", type=int, default=100)
    p.add_argument("--repeats", type=int, default=500)
    p.add_argument("--n-estimates", type=int, default=100)
    p.add_argument("--B", type=int, default=200)
    p.add_argument("--M", type=int, default=0, help="also run simulated weights with M draws")
    p.add_argument("-o", "--output")

    p = sub.add_parser("diagram", parents=[common], help="posterior-mass and contour curves")
    _problem_options(p)
    p.add_argument("--estimand", default="param-mean")
    p.add_argument("--quantiles", default="0.05,0.16,0.5,0.84,0.95")
    p.add_argument("--points", type=int, default=512)
    p.add_argument("-o", "--output")
    p.add_argument("--marginal-output", help="file for the marginal density of f")

    p = sub.add_parser("validate", parents=[common], help="check a run file")
    p.add_argument("run")
    return parser


def _emit(rows, args):
    text = io.format_rows(rows, args.format)
    if getattr(args, "output", None):
        io.atomic_write(args.output, text)
    else:
        sys.stdout.write(text)


def _seed(args, fallback=0):
    return fallback if args.seed is None else args.seed


def _cmd_simulate(args):
    problem = Problem(args.family, args.dim, prior_sigma=args.sigma_pi, tracked_components=args.tracked)
    if args.term_logl is not None:
        rule = TerminationRule("fixed_logl", l_term=args.term_logl)
    else:
        rule = TerminationRule("evidence_fraction", eps=args.term_eps)
    config = SamplerConfig(args.nlive, rule, seed=_seed(args), keep_final_live=args.keep_final_live)
    io.write_run(run_perfect_ns(problem, config), args.output)
    return 0


def _cmd_analyze(args):
    run = io.read_run(args.run)
    methods = args.method or ["bootstrap"]
    estimands = [Estimand.parse(s) for s in (args.estimand or ["logz", "param-mean"])]
    counts = {"bootstrap": args.B, "simulated_weights": args.M, "split_runs": args.N}
    rng = np.random.default_rng(_seed(args))
    rows = []
    for m in methods:
        for rep in estimate_errors(run, estimands, m, counts[m], rng):
            row = {
                "estimand": rep.estimand.label,
                "method": m,
                "count": rep.count,
                "point_value": rep.point_value,
                "std_estimate": rep.std_estimate,
            }
            if args.alpha is not None and m == "bootstrap":
                lo, hi = ci_from_replications(rep.point_value, rep.replications, args.alpha)
                row.update(ci_lower=float(lo), ci_upper=float(hi), ci_alpha=args.alpha)
            rows.append(row)
    _emit(rows, args)
    return 0


def _load_spec(args):
    try:
        with open(args.spec) as fh:
            spec = TableSpec.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise io.RunFileError(f"{args.spec}: bad spec file ({exc})") from exc
    if args.seed is not None:
        spec = TableSpec.from_dict(dict(spec.to_dict(), base_seed=args.seed))
    return spec


def _cmd_table(args):
    _emit(run_table(_load_spec(args), jobs=args.jobs), args)
    return 0


def _cmd_coverage(args):
    _emit(run_coverage(_load_spec(args), jobs=args.jobs).rows(), args)
    return 0


def _cmd_sweep(args):
    try:
        dims = [int(d) for d in args.dims.split(",") if d.strip()]
    except ValueError as exc:
        raise UsageError(f"--dims must be comma separated integers ({exc})") from exc
    methods = {"bootstrap": args.B}
    if args.M:
        methods["simulated_weights"] = args.M
    rows = dimension_sweep(args.family, dims, args.nlive, args.repeats, methods,
                           n_estimates=args.n_estimates, base_seed=_seed(args), jobs=args.jobs)
    _emit(rows, args)
    return 0


def _cmd_diagram(args):
    problem = Problem(args.family, args.dim, prior_sigma=args.sigma_pi, tracked_components=args.tracked)
    quantiles = [float(q) for q in args.quantiles.split(",")]
    data = diagram_data(problem, Estimand.parse(args.estimand), quantiles=quantiles, n_grid=args.points)
    _emit(data.curve_rows(), args)
    if args.marginal_output:
        io.write_rows(data.marginal_rows(), args.marginal_output, args.format)
    return 0


def _cmd_validate(args):
    run = io.read_run(args.run)
    problems = validate_run(run)
    for p in problems:
        print(p)
    if problems:
        return 2
    print(f"ok: {len(run)} points")
    return 0


COMMANDS = {
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "table": _cmd_table,
    "coverage": _cmd_coverage,
    "sweep": _cmd_sweep,
    "diagram": _cmd_diagram,
    "validate": _cmd_validate,
}


def cli(argv=None):
    """Run the command line; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"nserrors: error: {exc}", file=sys.stderr)
        return 1
    except (io.RunFileError, ValueError, OSError) as exc:
        print(f"nserrors: error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
