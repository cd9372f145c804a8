"""Standalone plot scripts: one per figure kind, --in/--out flags."""

from __future__ import annotations

import argparse
import sys

from .render import RENDERERS, FigureSpec
from .schemas import SchemaError


def _run(kind: str, argv=None) -> int:
    parser = argparse.ArgumentParser(prog=f"plot-{kind}")
    parser.add_argument("--in", dest="input_csv", required=True)
    parser.add_argument("--out", dest="output_image", required=True)
    parser.add_argument("--title", default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    spec = FigureSpec(input_csv=args.input_csv, kind=kind,
                      output_image=args.output_image, title=args.title)
    try:
        RENDERERS[kind](spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main_entropy(argv=None) -> int:
    return _run("entropy", argv)


def main_bits(argv=None) -> int:
    return _run("bits", argv)


def main_mse(argv=None) -> int:
    return _run("mse", argv)


if __name__ == "__main__":
    sys.exit(_run(sys.argv[1], sys.argv[2:]))
