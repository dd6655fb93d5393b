"""Command-line wrapper: plotgen <figure.csv> --out-base <path>."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import FigureSpec, RenderError, render


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="plotgen", description=__doc__)
    p.add_argument("csv", help="figure CSV (frozen schema)")
    p.add_argument("--out-base", required=True,
                   help="output path without extension; writes .svg and .png")
    p.add_argument("--title", default="")
    p.add_argument("--formats", default="svg,png")
    args = p.parse_args(argv)
    spec = FigureSpec(
        csv_path=Path(args.csv),
        out_base=Path(args.out_base),
        title=args.title,
        formats=tuple(f for f in args.formats.split(",") if f),
    )
    try:
        for path in render(spec):
            print(f"wrote {path}")
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
