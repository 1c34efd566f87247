"""Command-line front end: ``dcslab <scenario> [--config PATH] [--seed S]
[--out DIR]``.

Exit codes: 0 success, 1 validation failure, 2 assertion failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .scenarios import SCENARIOS, ConfigError, run_scenario


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the CLI contract reserves 2 for
    # assertion failures, so downgrade usage problems to exit 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dcslab",
                     description="Compressed-sensing aggregation lab scenarios")
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", type=Path, default=None,
                       help="JSON config overriding the scenario defaults")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides the config's seed)")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default runs/<scenario>)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    config = {}
    if args.config is not None:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {args.config}: {exc}",
                  file=sys.stderr)
            return 1
        if not isinstance(config, dict):
            print(f"error: config {args.config} must be a JSON object",
                  file=sys.stderr)
            return 1
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    out_dir = args.out if args.out is not None else Path("runs") / args.scenario
    try:
        return run_scenario(args.scenario, config, out_dir, seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
