"""`plots <kind> <csv> <out.png>` command."""

import argparse
import sys

from .figures import FIGURE_KINDS, FigureSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots", description="Render a sweep CSV into a figure")
    parser.add_argument("kind", choices=FIGURE_KINDS)
    parser.add_argument("csv_path")
    parser.add_argument("out_path")
    args = parser.parse_args(argv)
    try:
        render(FigureSpec(args.kind, args.csv_path, args.out_path))
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
