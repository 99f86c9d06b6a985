"""Command-line entry point:

    ddfem-plot --kind <convergence|boxplot|deflection> --in CSV --out IMG
               [--slopes 1,2,3,4]
"""

import argparse
import sys

from .render import PlotSpec, render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ddfem-plot", description="Render ddfem benchmark CSVs")
    parser.add_argument("--kind", required=True,
                        choices=("convergence", "boxplot", "deflection"))
    parser.add_argument("--in", dest="input_csv", required=True)
    parser.add_argument("--out", dest="output", required=True)
    parser.add_argument("--slopes", default="",
                        help="comma-separated reference slopes")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    slopes = tuple(float(s) for s in args.slopes.split(",") if s.strip())
    spec = PlotSpec(input_csv=args.input_csv, kind=args.kind,
                    output=args.output, slopes=slopes)
    print(f"wrote {render(spec)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
