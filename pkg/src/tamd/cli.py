"""Command-line interface.

Subcommands: ``fit`` (data CSV to model JSON), ``simulate`` (DGP to data
CSV), ``benchmark`` (experiment file to results), ``gradcheck``
(randomized finite-difference sweep), and ``reproduce`` (built-in
desk-scale experiments). Exit codes: 0 success, 1 usage or specification
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .affinity import PenaltyConfig
from .barrier_grad import randomized_check
from .errors import TamdError
from .fitter import FitterConfig, default_lambda, fit
from .harness import (
    highdim_spec,
    parse_experiment_file,
    robustness_spec,
    run_experiment,
    summarize,
    table1_spec,
    write_summary,
)
from .modelio import save_params
from .simgen import (
    DGP_KINDS,
    DgpSpec,
    generate,
    init_random,
    make_rng,
    read_data_csv,
    write_sample_csv,
)

__all__ = ["main", "console_main"]

GRADCHECK_TOLERANCE = 1e-5


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage problems with exit code 1."""

    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tamd",
                     description="Barrier-penalized Gaussian mixture "
                                 "estimation and its benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a mixture to a data CSV")
    p_fit.add_argument("--data", required=True, help="CSV with header x1..xd[,label]")
    p_fit.add_argument("--k", required=True, type=int, help="number of components")
    p_fit.add_argument("--out", required=True, help="output model JSON path")
    p_fit.add_argument("--lambda-n", default="auto",
                       help="penalty schedule value, or 'auto' for sqrt(log n / n)")
    p_fit.add_argument("--lambda-wt", type=float, default=1.0)
    p_fit.add_argument("--lambda-sc", type=float, default=0.0)
    p_fit.add_argument("--jitter", type=float, default=1e-6)
    p_fit.add_argument("--max-iters", type=int, default=500)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--quiet", action="store_true")

    p_sim = sub.add_parser("simulate", help="generate a synthetic data CSV")
    p_sim.add_argument("--kind", choices=DGP_KINDS, default="well_specified")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--d", type=int, required=True)
    p_sim.add_argument("--k", type=int, required=True)
    p_sim.add_argument("--delta", type=float, default=2.0)
    p_sim.add_argument("--kappa", type=float, default=1.0)
    p_sim.add_argument("--eps", type=float, default=0.0)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.add_argument("--quiet", action="store_true")

    p_bench = sub.add_parser("benchmark", help="run an experiment file")
    p_bench.add_argument("--config", required=True, help="experiment spec file")
    p_bench.add_argument("--out", required=True, help="output directory")
    p_bench.add_argument("--threads", type=int, default=1)
    p_bench.add_argument("--quiet", action="store_true")

    p_grad = sub.add_parser("gradcheck",
                            help="randomized finite-difference gradient sweep")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--cases", type=int, default=100)
    p_grad.add_argument("--step", type=float, default=1e-5)
    p_grad.add_argument("--quiet", action="store_true")

    p_rep = sub.add_parser("reproduce", help="run a built-in experiment")
    p_rep.add_argument("which", choices=("table1", "robustness", "highdim"))
    p_rep.add_argument("--out", required=True, help="output directory")
    p_rep.add_argument("--full", action="store_true",
                       help="paper-scale sizes instead of desk scale")
    p_rep.add_argument("--seed", type=int, default=None,
                       help="override the built-in base seed")
    p_rep.add_argument("--threads", type=int, default=1)
    p_rep.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    handler = {
        "fit": _cmd_fit,
        "simulate": _cmd_simulate,
        "benchmark": _cmd_benchmark,
        "gradcheck": _cmd_gradcheck,
        "reproduce": _cmd_reproduce,
    }[args.command]
    try:
        return handler(args)
    except (_UsageError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TamdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if _is_spec_problem(exc) else 2


def _is_spec_problem(exc: TamdError) -> bool:
    from .errors import ContractError, SpecError
    return isinstance(exc, (SpecError, ContractError))


def console_main() -> None:
    sys.exit(main())


def _cmd_fit(args) -> int:
    data = read_data_csv(args.data)
    n = data.shape[0]
    lam = default_lambda(n) if args.lambda_n == "auto" else float(args.lambda_n)
    penalty = PenaltyConfig(lambda_n=lam, lambda_wt=args.lambda_wt,
                            lambda_sc=args.lambda_sc, jitter=args.jitter)
    cfg = FitterConfig(max_iters=args.max_iters, penalty=penalty)
    init = init_random(data, args.k, "kmeanspp_like", make_rng(args.seed))
    result = fit(data, init, cfg)
    save_params(result.params, args.out)
    if not args.quiet:
        print(f"fit: n={n} d={data.shape[1]} k={args.k} lambda_n={lam:.6g}")
        print(f"objective={result.objective_trace[-1]:.6f} "
              f"iterations={result.iterations} converged={result.converged} "
              f"degenerate={result.degenerate}")
        print(f"model written to {args.out}")
    if result.degenerate:
        print("error: fit ended degenerate (collapsed covariance)",
              file=sys.stderr)
        return 2
    return 0


def _cmd_simulate(args) -> int:
    spec = DgpSpec(kind=args.kind, n=args.n, d=args.d, k_true=args.k,
                   separation_delta=args.delta, condition_kappa=args.kappa,
                   contamination_eps=args.eps, seed=args.seed)
    sample = generate(spec)
    write_sample_csv(sample, args.out)
    if not args.quiet:
        print(f"simulate: wrote {args.n} x {args.d} sample to {args.out}")
    return 0


def _cmd_benchmark(args) -> int:
    spec = parse_experiment_file(args.config)
    records = run_experiment(spec, threads=args.threads, out_dir=args.out,
                             quiet=args.quiet)
    write_summary(summarize(records), args.out)
    if not args.quiet:
        print(f"benchmark: wrote results to {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    worst = randomized_check(args.cases, seed=args.seed, step=args.step)
    passed = worst < GRADCHECK_TOLERANCE
    if not args.quiet:
        print(f"gradcheck: {args.cases} configurations, "
              f"max relative error {worst:.3e} "
              f"(tolerance {GRADCHECK_TOLERANCE:.0e})")
    print("PASS" if passed else "FAIL")
    return 0 if passed else 2


def _cmd_reproduce(args) -> int:
    builders = {"table1": table1_spec, "robustness": robustness_spec,
                "highdim": highdim_spec}
    kwargs = {"full": args.full}
    if args.seed is not None:
        kwargs["base_seed"] = args.seed
    spec = builders[args.which](**kwargs)
    records = run_experiment(spec, threads=args.threads, out_dir=args.out,
                             quiet=args.quiet)
    rows = summarize(records)
    write_summary(rows, args.out)
    if not args.quiet:
        _print_headline(args.which, rows)
        print(f"reproduce {args.which}: results in {args.out}")
    return 0


def _print_headline(which: str, rows: list[dict]) -> None:
    if which == "table1":
        for row in rows:
            print(f"{row['method']}: success_rate="
                  f"{_fmt(row['success_mean'])} "
                  f"mean_mse={_fmt(row['mean_mse_mean'])} "
                  f"cov_error={_fmt(row['cov_frobenius_error_mean'])}")
    elif which == "robustness":
        for row in rows:
            print(f"{row['method']} eps={row['eps']}: "
                  f"heldout_loglik={_fmt(row['heldout_loglik_mean'])} "
                  f"ari={_fmt(row['ari_mean'])}")
    else:
        for row in rows:
            print(f"{row['method']} d={row['d']} n={row['n']}: "
                  f"success_rate={_fmt(row['success_mean'])} "
                  f"heldout_loglik={_fmt(row['heldout_loglik_mean'])}")


def _fmt(value) -> str:
    return "NA" if value is None else f"{value:.4f}"
