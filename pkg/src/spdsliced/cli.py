"""Command-line driver for the synthetic experiments.

Exit codes: 0 success, 2 usage error, 3 data validation error,
4 numerical failure.

Heavy imports happen after argument parsing so --threads (or the
SPDSLICED_THREADS environment variable) can pin the BLAS thread pools
before any numerical library loads.
"""

from __future__ import annotations

import argparse
import os
import sys

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list: {exc}")


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdsliced",
        description="Sliced optimal-transport discrepancies between distributions of SPD matrices.",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (fallback: SPDSLICED_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distance", help="discrepancy between two dataset files")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--metric", required=True,
                   choices=["spdsw", "logsw", "hspdsw", "lew", "les", "aiw"])
    p.add_argument("--projections", type=int, default=200)
    p.add_argument("--order", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampler", choices=["eig", "fast"], default="eig")
    p.add_argument("--epsilon", type=float, default=1.0)
    _output_flags(p)

    p = sub.add_parser("gen-wishart", help="generate Wishart dataset files")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dof", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", default="identity",
                   help="'identity' or a dataset file whose first matrix is the scale")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--class-scale-step", type=float, default=1.0)
    p.add_argument("--shift-angle", type=float, default=0.0)
    p.add_argument("--shift-identity", type=float, default=0.0)
    p.add_argument("--shift-random", type=float, default=0.0)
    p.add_argument("--output", required=True)
    p.add_argument("--output-shifted", default=None)
    p.add_argument("--report", default=None, help="optional report path")
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("benchmark-runtime", help="runtime scaling versus sample count")
    p.add_argument("--n-grid", type=_int_list,
                   default=[100, 215, 464, 1000, 2154, 4641, 10000, 21544, 46415, 100000])
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--projections", type=int, default=200)
    p.add_argument("--metrics", type=_str_list, default=["spdsw", "logsw", "lew", "les"])
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--max-cost-bytes", type=float, default=2e8)
    p.add_argument("--dof", type=int, default=None)
    _output_flags(p)

    p = sub.add_parser("sample-complexity", help="estimator error versus sample count")
    p.add_argument("--dims", type=_int_list, default=[2, 20])
    p.add_argument("--max-dim", type=int, default=20,
                   help="guard on the largest allowed dimension")
    p.add_argument("--n-grid", type=_int_list, default=[10, 31, 100, 316, 1000])
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--metrics", type=_str_list, default=["spdsw", "lew"])
    p.add_argument("--projections", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    _output_flags(p)

    p = sub.add_parser("projection-complexity", help="Monte Carlo error versus projections")
    p.add_argument("--dims", type=_int_list, default=[2, 20])
    p.add_argument("--L-grid", dest="l_grid", type=_int_list,
                   default=[1, 3, 10, 32, 100, 316, 1000])
    p.add_argument("--L-star", dest="l_star", type=int, default=10000)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    _output_flags(p)

    p = sub.add_parser("adapt", help="align a labeled source onto a target")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--mode", choices=["particles", "transform"], default="particles")
    p.add_argument("--loss", choices=["spdsw", "logsw", "lew", "les"], default="spdsw")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=None,
                   help="learning rate; defaults depend on mode and loss")
    p.add_argument("--projections", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=10.0)
    p.add_argument("--no-safeguard", action="store_true",
                   help="plain fixed-step descent without step halving")
    p.add_argument("--evaluate", action="store_true",
                   help="require before/after accuracy (error if the target has no labels)")
    p.add_argument("--output-adapted", default=None)
    _output_flags(p)

    p = sub.add_parser("kernel-ridge", help="distribution regression with sliced kernels")
    p.add_argument("--train", required=True, help="manifest of datasets and targets")
    p.add_argument("--test", default=None)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--projections", type=int, default=100)
    p.add_argument("--quantiles", type=int, default=100)
    p.add_argument("--sigma", default="median", help="'median' or a positive number")
    p.add_argument("--alpha", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-predictions", default=None)
    _output_flags(p)

    return parser


def _output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", default=None, help="report path (default: stdout)")
    p.add_argument("--format", choices=["json", "csv"], default="json")


def _set_threads(threads: int | None) -> None:
    value = threads if threads is not None else os.environ.get("SPDSLICED_THREADS")
    if value is None:
        return
    for var in _THREAD_ENV_VARS:
        os.environ[var] = str(value)


def _dispatch(args: argparse.Namespace, parser: argparse.ArgumentParser):
    from . import experiments

    if args.command == "distance":
        if args.metric == "hspdsw" and args.sampler == "fast":
            parser.error("--sampler fast cannot be combined with --metric hspdsw")
        return experiments.run_distance(
            args.file_a, args.file_b, args.metric, projections=args.projections,
            order=args.order, seed=args.seed, sampler=args.sampler, epsilon=args.epsilon,
        )
    if args.command == "gen-wishart":
        if args.dof < args.d:
            parser.error("--dof must be at least --d")
        return experiments.run_gen_wishart(
            output=args.output, d=args.d, n=args.n, dof=args.dof, seed=args.seed,
            scale_path=None if args.scale == "identity" else args.scale,
            classes=args.classes, class_scale_step=args.class_scale_step,
            shift_angle=args.shift_angle, shift_identity=args.shift_identity,
            shift_random=args.shift_random, output_shifted=args.output_shifted,
        )
    if args.command == "benchmark-runtime":
        return experiments.run_benchmark_runtime(
            n_grid=args.n_grid, d=args.d, projections=args.projections,
            metrics=args.metrics, repeats=args.repeats, seed=args.seed,
            epsilon=args.epsilon, max_cost_bytes=args.max_cost_bytes, dof=args.dof,
        )
    if args.command == "sample-complexity":
        if max(args.dims) > args.max_dim:
            parser.error(
                f"dimension {max(args.dims)} exceeds the cap {args.max_dim}; "
                "raise --max-dim to run it"
            )
        return experiments.run_sample_complexity(
            dims=args.dims, n_grid=args.n_grid, repeats=args.repeats,
            metrics=args.metrics, projections=args.projections, seed=args.seed,
        )
    if args.command == "projection-complexity":
        return experiments.run_projection_complexity(
            dims=args.dims, L_grid=args.l_grid, L_star=args.l_star,
            repeats=args.repeats, n=args.n, seed=args.seed,
        )
    if args.command == "adapt":
        return experiments.run_adapt(
            source_path=args.source, target_path=args.target, mode=args.mode,
            loss=args.loss, epochs=args.epochs, learning_rate=args.lr,
            projections=args.projections, seed=args.seed, epsilon=args.epsilon,
            safeguard=not args.no_safeguard, output_adapted=args.output_adapted,
            require_evaluation=args.evaluate,
        )
    if args.command == "kernel-ridge":
        sigma = args.sigma
        if sigma != "median":
            try:
                sigma = float(sigma)
            except ValueError:
                parser.error("--sigma must be 'median' or a number")
        return experiments.run_kernel_ridge(
            train_manifest=args.train, test_manifest=args.test, folds=args.folds,
            projections=args.projections, quantiles=args.quantiles, sigma=sigma,
            alpha=args.alpha, seed=args.seed, output_predictions=args.output_predictions,
        )
    parser.error(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _set_threads(args.threads)

    from .errors import (
        DataValidationError,
        DegenerateDirection,
        DegenerateSample,
        DimensionMismatch,
        IllConditioned,
        InstanceTooLarge,
        MissingLabels,
        NotConverged,
        NotPositiveDefinite,
    )

    try:
        report = _dispatch(args, parser)
    except (DataValidationError, DimensionMismatch, MissingLabels) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (
        NotConverged,
        IllConditioned,
        NotPositiveDefinite,
        DegenerateSample,
        DegenerateDirection,
        InstanceTooLarge,
        OverflowError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4

    from .data_io import write_report

    # gen-wishart's --output is the dataset itself; its report goes to --report.
    output = args.report if args.command == "gen-wishart" else args.output
    if output is not None:
        write_report(report, output, fmt=args.format)
    else:
        text = report.to_json() if args.format == "json" else report.to_csv()
        print(text)
    if report.timing is not None:
        print(f"elapsed: {report.timing:.3f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
