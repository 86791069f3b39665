"""Command line entry point: ``homlab {homogenize,nonlocal,properties}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, ExperimentConfig
from .runner import run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homlab", description="Cell-problem homogenization and non-local limit experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("homogenize", "g_k(A) tables and f_hom upper estimates"),
                       ("nonlocal", "cylinder-lattice convergence study"),
                       ("properties", "growth, gauge, homogeneity, convexity, coercivity")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (default: config output.dir)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None, help="override the sampling seed")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"homlab: invalid config: {exc}", file=sys.stderr)
        return 2
    if cfg.kind != args.command:
        print(f"homlab: config kind {cfg.kind!r} does not match subcommand {args.command!r}",
              file=sys.stderr)
        return 2
    bundle = run(cfg, threads=args.threads, seed=args.seed)
    out = args.out or cfg.output.get("dir", "results")
    for path in bundle.write(out):
        print(path)
    if bundle.flagged:
        print(f"homlab: {bundle.flagged} flagged row(s)", file=sys.stderr)
    return bundle.exit_code


if __name__ == "__main__":
    sys.exit(main())
