"""Command-line entry point."""

from __future__ import annotations

import sys

from .config import ConfigError, parse_config
from .experiments import SelfCheckFailure, run


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        config = parse_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        paths = run(config)
    except SelfCheckFailure as exc:
        print(f"selfcheck failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0
