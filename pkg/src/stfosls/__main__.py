"""Command line entry point: ``python -m stfosls``."""
from __future__ import annotations

import argparse
import sys

from .studies import MemoryGuardError, RunConfig, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stfosls",
        description="Space-time least-squares Stokes solver: convergence and ratio studies.")
    p.add_argument("--domain", choices=["square", "lshape"], default="square")
    p.add_argument("--bc", choices=["slip", "noslip"], default="slip")
    p.add_argument("--div-norm", choices=["h1", "l2"], default="h1")
    p.add_argument("--bubbles", choices=["on", "off"], default="on")
    p.add_argument("--refinements", type=int, default=2)
    p.add_argument("--mode", choices=["convergence", "ratios", "both"], default="convergence")
    p.add_argument("--tol", type=float, default=1e-10, help="PCG relative residual tolerance")
    p.add_argument("--out", default=None, help="CSV output path (stdout if omitted)")
    p.add_argument("--max-dofs", type=int, default=2_000_000,
                   help="refuse levels with more unknowns than this")
    p.add_argument("--verbose", action="store_true",
                   help="log PCG iterations and level summaries to stderr")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig(domain=args.domain, bc=args.bc, div_norm=args.div_norm,
                           bubbles=args.bubbles == "on", refinements=args.refinements,
                           mode=args.mode, tol=args.tol, out=args.out,
                           verbose=args.verbose, max_dofs=args.max_dofs)
        text = run(config)
    except (ValueError, MemoryGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.out:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
