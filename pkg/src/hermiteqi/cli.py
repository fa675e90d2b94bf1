"""Command line: ``hermiteqi <subcommand> --config spec.toml --out DIR``.

Exit status 0 when every declared check passes, 1 on a failed check and 2
on a configuration error.
"""
from __future__ import annotations

import argparse
import sys

from . import kernels
from .experiments import KINDS, ConfigError, load_spec, run, spec_from_dict

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hermiteqi", description="Quasi-interpolation experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", help="TOML experiment file (defaults apply when omitted)")
        sp.add_argument("--out", default=".", help="output directory for CSV files")
        sp.add_argument("--tail-tol", type=float, default=None, help="lattice-sum truncation tolerance")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for point evaluation")
        sp.add_argument("--seed", type=int, default=None, help="seed for random Q generation")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"kind": args.command, "tail_tol": args.tail_tol, "seed": args.seed}
    try:
        if args.config:
            spec = load_spec(args.config, overrides)
        else:
            spec = spec_from_dict({k: v for k, v in overrides.items() if v is not None})
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        kernels.set_threads(args.threads)
        outcome = run(spec, args.out, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for line in outcome.summary:
        print(line)
    for path in outcome.files:
        print(f"wrote {path}")
    if outcome.failures:
        for f in outcome.failures:
            print(f"FAIL {f}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
