"""Command line: plot <kind> <input.csv> -o <out.png>."""

from __future__ import annotations

import argparse
import sys

from .readers import SCHEMAS, SchemaError
from .render import PlotJob, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render ibcmps CSV artifacts into figures"
    )
    parser.add_argument("kind", choices=sorted(SCHEMAS))
    parser.add_argument("input", help="CSV artifact path")
    parser.add_argument("-o", "--output", required=True, help="output image path")
    parser.add_argument("--xlim", type=float, nargs=2, default=None)
    parser.add_argument("--ylim", type=float, nargs=2, default=None)
    args = parser.parse_args(argv)
    job = PlotJob(kind=args.kind, input_path=args.input, output_path=args.output,
                  x_range=tuple(args.xlim) if args.xlim else None,
                  y_range=tuple(args.ylim) if args.ylim else None)
    try:
        render(job)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
