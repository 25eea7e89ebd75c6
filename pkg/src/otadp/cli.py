"""Command-line front end.

    otadp {attack|calibrate|run|asweep|compare} [--config FILE] [--seed N]
          [--out DIR] [--trials N] [--tag TAG] [--figures]
    otadp defaults

Outputs land in ``OUT/<command>/<tag>`` (tag defaults to ``seed<N>``) with a
``manifest.json`` that can be passed back as ``--config`` to reproduce them.

Exit codes: 0 success, 2 configuration error, 3 numeric or infeasible,
4 divergence with bids not clamped.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import apply_overrides, default_config, load_config
from .errors import OtadpError
from .experiments import COMMANDS
from .io import build_manifest, output_dir, write_csv, write_json

logger = logging.getLogger("otadp")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otadp",
        description="Private over-the-air energy market simulations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "attack": "bid-inference attack across noise ratios",
        "calibrate": "minimum noise ratio for privacy targets",
        "run": "Monte Carlo price trajectories",
        "asweep": "mean-square error versus market sensitivity",
        "compare": "privacy gain over orthogonal transmission",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="scenario JSON file or a previous manifest.json")
        p.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
        p.add_argument("--out", default="results", help="base output directory")
        p.add_argument("--trials", type=int, help="Monte Carlo trials (overrides run.n_trials)")
        p.add_argument("--tag", help="output subdirectory name (default seed<N>)")
        p.add_argument("--figures", action="store_true", help="also render PNG figures")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub.add_parser("defaults", help="print the default configuration")
    return parser


def execute(args) -> list:
    """Run one subcommand and write its outputs; returns the written paths."""
    cfg = load_config(args.config) if args.config else default_config()
    cfg = apply_overrides(cfg, seed=args.seed, trials=args.trials)
    result = COMMANDS[args.command](cfg)
    out = output_dir(args.out, args.command, args.tag or f"seed{cfg.run.seed}")
    written = []
    for name, table in result.tables.items():
        written.append(write_csv(out / f"{name}.csv", table.header, table.rows))
    for name, doc in result.documents.items():
        written.append(write_json(out / f"{name}.json", doc))
    for name, text in result.texts.items():
        path = out / f"{name}.txt"
        path.write_text(text)
        written.append(path)
    manifest = build_manifest(args.command, cfg.to_dict(), result.derived, cfg.run.seed)
    written.append(write_json(out / "manifest.json", manifest))
    if args.figures:
        from .plotting import render

        written.extend(render(result, out))
    for text in result.texts.values():
        sys.stdout.write(text)
    logger.info("wrote %d files to %s", len(written), out)
    return written


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "defaults":
        sys.stdout.write(default_config().to_json())
        return 0
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        execute(args)
    except OtadpError as exc:
        print(f"otadp {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
