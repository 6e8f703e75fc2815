"""Console entry point.

Exit codes: 0 all checks passed, 1 at least one check failed, 2 usage or
configuration error, 3 numerical failure inside a run. Every error path
prints a single line to stderr.
"""
from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, FieldFormatError, NumericalFailure
from . import commands


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rheoflow",
        description="spectral Galerkin runs and verification suites for "
                    "density-coupled non-Newtonian flow on the torus")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True,
                           help="path to a key = value run configuration")
        p.add_argument("--out", required=True,
                       help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=42,
                       help="seed for randomized checks (default 42)")
        p.add_argument("--svg", action="store_true",
                       help="also write simple line plots")

    p = sub.add_parser("simulate", help="run a config and write the energy "
                                        "ledger plus optional snapshots")
    common(p)

    p = sub.add_parser("verify", help="run a module property suite")
    p.add_argument("suite", nargs="?", default="all",
                   help="basis, measure, rheology, transport or all "
                        "(default all)")
    p.add_argument("--out", help="optional directory for a manifest")
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("relative-energy",
                       help="track the relative energy against the "
                            "manufactured reference flow")
    common(p)

    p = sub.add_parser("defect-study",
                       help="oscillation-to-measure concentration study")
    common(p, config_required=False)
    p.add_argument("--n-list", default="4,8,16,32",
                   help="comma-separated oscillation frequencies")
    p.add_argument("--w", default="0,1,0",
                   help="oscillation amplitude vector, orthogonal to e1")
    p.add_argument("--cells", type=int, default=4,
                   help="cells per axis of the measure partition")

    p = sub.add_parser("convergence",
                       help="dt, basis-cutoff and regularization ladders "
                            "over a base config")
    common(p)
    return parser


def _parse_triple(text: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"expected three comma-separated numbers, "
                          f"got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as numbers") from None


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(p.strip()) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as integers") from None


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            manifest = commands.cmd_simulate(args.config, args.out,
                                             seed=args.seed, svg=args.svg)
        elif args.command == "verify":
            manifest = commands.cmd_verify(args.suite, out_dir=args.out,
                                           seed=args.seed)
        elif args.command == "relative-energy":
            manifest = commands.cmd_relative_energy(args.config, args.out,
                                                    seed=args.seed,
                                                    svg=args.svg)
        elif args.command == "defect-study":
            manifest = commands.cmd_defect_study(
                args.out, n_values=_parse_int_list(args.n_list),
                w=_parse_triple(args.w), cells=args.cells, seed=args.seed,
                svg=args.svg)
        else:
            manifest = commands.cmd_convergence(args.config, args.out,
                                                seed=args.seed, svg=args.svg)
    except ConfigError as exc:
        print(f"config-error: {exc}", file=sys.stderr)
        return 2
    except FieldFormatError as exc:
        print(f"format-error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical-failure: {exc}", file=sys.stderr)
        return 3

    if not manifest.all_passed:
        failed = [k for k, ok in manifest.checks.items() if not ok]
        print(f"check-failure: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
