"""Command-line entry: render one figure or a whole named set."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_SETS, EmptyData, FigureSpec, SchemaMismatch, figure_set, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bisample-figures",
        description="Render experiment metric CSVs into line charts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    one = sub.add_parser("render", help="render a single figure from one CSV")
    one.add_argument("--csv", required=True)
    one.add_argument("--x", required=True, help="x-axis column")
    one.add_argument("--y", required=True, nargs="+", help="one or more y-axis columns")
    one.add_argument("--series", default="mechanism",
                     help="series column; pass '' for a single series")
    one.add_argument("--log-y", action="store_true")
    one.add_argument("--title", default=None)
    one.add_argument("--out", required=True)

    many = sub.add_parser("set", help="render a named figure set from a CSV directory")
    many.add_argument("--name", choices=FIGURE_SETS + ("all",), default="all")
    many.add_argument("--csv-dir", required=True)
    many.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "render":
            spec = FigureSpec(
                input_csv=args.csv,
                x_axis=args.x,
                y_axis=tuple(args.y) if len(args.y) > 1 else args.y[0],
                series_key=args.series or None,
                log_y=args.log_y,
                title=args.title,
                output=args.out,
            )
            print(f"wrote {render(spec)}")
        else:
            for path in figure_set(args.name, args.csv_dir, args.out):
                print(f"wrote {path}")
    except (SchemaMismatch, EmptyData, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
