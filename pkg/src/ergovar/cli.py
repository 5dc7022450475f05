"""Command line interface.

    ergovar list [--machine]
    ergovar run CONFIG_OR_NAME [--seed S] [--replicates R] [--out DIR] [--workers W]
    ergovar oracle MODEL.json --f SPEC

`run` accepts either a JSON config file or a built-in experiment name (run
with its defaults).  Exit code 0 means every check passed; 1 means a check
failed; 2 means the invocation or config was invalid.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .errors import ErgovarError, InvalidConfig, UnknownModel
from .finite_chain import (
    FiniteReversibleKernel,
    asymptotic_variance_exact,
    dirichlet_form,
    spectral_gap,
    variational_avar,
)
from .models import build_function


def _parse_function(spec: str, kernel: FiniteReversibleKernel) -> np.ndarray:
    if spec == "identity":
        return build_function({"name": "identity"}, kernel)
    if spec.startswith("indicator:"):
        return build_function({"name": "indicator", "state": int(spec.split(":", 1)[1])}, kernel)
    try:
        return np.array([float(tok) for tok in spec.split(",")])
    except ValueError as err:
        raise InvalidConfig(
            f"--f must be 'identity', 'indicator:<i>', or comma-separated values: {err}"
        ) from err


def _cmd_list(args) -> int:
    print(experiments.list_experiments(machine=args.machine))
    return 0


def _cmd_run(args) -> int:
    target = args.config
    if Path(target).exists():
        cfg = experiments.load_config(target)
    else:
        cfg = experiments.default_config(target)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.replicates is not None:
        cfg.replicates = args.replicates
    if args.out is not None:
        cfg.out_dir = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    report = experiments.run(cfg)
    print(f"experiment: {report.experiment}")
    print(f"claim:      {report.claim}")
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"  [{status}] {check.name}: {check.detail}")
    print(f"csv:        {report.csv_path}")
    for fig in report.figures:
        print(f"figure:     {fig}")
    print(f"elapsed:    {report.elapsed_s:.2f} s")
    return 0 if report.all_passed else 1


def _cmd_oracle(args) -> int:
    kernel = FiniteReversibleKernel.from_json(args.model)
    f = _parse_function(args.f, kernel)
    report = spectral_gap(kernel)
    print(f"states:              {kernel.n}")
    print(f"right spectral gap:  {report.gap!r}")
    print(f"min eigenvalue:      {report.min_eigenvalue!r}")
    print(f"dirichlet form:      {dirichlet_form(kernel, f)!r}")
    print(f"asymptotic variance: {asymptotic_variance_exact(kernel, f)!r}")
    print(f"variational value:   {variational_avar(kernel, f)!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ergovar",
        description="asymptotic-variance analysis for reversible Markov chains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_list = sub.add_parser("list", help="list built-in experiments")
    p_list.add_argument("--machine", action="store_true", help="JSON lines output")
    p_list.set_defaults(func=_cmd_list)

    p_run = sub.add_parser("run", help="run an experiment config or built-in name")
    p_run.add_argument("config", help="JSON config path or experiment name")
    p_run.add_argument("--seed", type=int, default=None, help="master seed override")
    p_run.add_argument("--replicates", type=int, default=None)
    p_run.add_argument("--out", type=str, default=None, help="output directory")
    p_run.add_argument("--workers", type=int, default=None, help="replicate worker threads")
    p_run.set_defaults(func=_cmd_run)

    p_oracle = sub.add_parser("oracle", help="exact computations for a kernel JSON file")
    p_oracle.add_argument("model", help="kernel JSON: {states, matrix, pi?}")
    p_oracle.add_argument("--f", required=True,
                          help="'identity', 'indicator:<i>', or comma-separated values")
    p_oracle.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfig, UnknownModel) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ErgovarError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
