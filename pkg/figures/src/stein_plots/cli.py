"""Command-line entry point: stein-plots --kind fig1 --csv PATH [--out PATH]."""

import argparse
import sys

from .render import KINDS, MissingColumn, make_spec, render


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="stein-plots",
        description="Render a figure from a stein-sense CSV file.",
    )
    parser.add_argument("--kind", required=True, choices=KINDS, help="figure to render")
    parser.add_argument("--csv", required=True, help="input CSV path")
    parser.add_argument(
        "--out",
        default=None,
        help="output image path (default: <kind>.png beside the CSV)",
    )
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        out = render(make_spec(args.kind, args.csv, args.out))
    except MissingColumn as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0
