"""Command-line entry point: mbnfig render --csv ... --kind ... --out ..."""

from __future__ import annotations

import argparse
import sys

from .render import SchemaError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="mbnfig", description="Plot simulator result CSVs")
    sub = parser.add_subparsers(dest="command", required=True)
    rend = sub.add_parser("render", help="render one figure from a CSV file")
    rend.add_argument("--csv", required=True, help="input CSV (results.csv or trace.csv)")
    rend.add_argument("--kind", required=True, choices=("convergence", "sweep"))
    rend.add_argument("--x", default="sweep_value", help="x-axis column (default: sweep_value)")
    rend.add_argument("--y", default="sum_rate_gbps", help="y-axis column for sweep plots")
    rend.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)

    try:
        out = render(args.csv, args.kind, args.out, x_column=args.x, y_column=args.y)
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
