"""Command-line entry point.

Usage:
    ddfem <inflation|cook|stretch|linearised> --order <1|2>
          [--lambda X | --f X | --u X] --levels n1,n2,...
          [--mesh FILE] [--constraint c1|c2] [--no-correction] --out DIR

A run can alternatively be described by a key-value text file passed as
``ddfem --config FILE`` (keys: experiment, order, lambda, f, u, levels,
mesh, constraint, correction, out, solution, diagonal).
"""

import argparse
import sys

from .bench import ExperimentConfig, run_experiment

EXPERIMENTS = ("inflation", "cook", "stretch", "linearised")


def _parse_levels(text):
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from None


def _add_common(parser):
    parser.add_argument("--order", type=int, choices=(1, 2), default=1)
    parser.add_argument("--levels", type=_parse_levels, default=None,
                        help="comma-separated refinement levels")
    parser.add_argument("--mesh", dest="mesh_file", default=None,
                        help="mesh file (stretch only)")
    parser.add_argument("--constraint", choices=("c1", "c2"), default=None)
    parser.add_argument("--no-correction", dest="correction",
                        action="store_false")
    parser.add_argument("--out", dest="out_dir", default=".")
    parser.add_argument("--diagonal", default="upper-left-to-lower-right",
                        choices=("lower-left-to-upper-right",
                                 "upper-left-to-lower-right"))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ddfem",
        description="Four-field mixed FE benchmarks for incompressible "
                    "nonlinear elasticity",
    )
    parser.add_argument("--config", default=None,
                        help="key-value config file replacing the subcommand")
    sub = parser.add_subparsers(dest="experiment")
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        _add_common(p)
        if name == "inflation":
            p.add_argument("--lambda", dest="lam", type=float, default=3.0)
        elif name == "cook":
            p.add_argument("--f", type=float, default=0.2)
        elif name == "stretch":
            p.add_argument("--u", type=float, default=1.5)
        elif name == "linearised":
            p.add_argument("--solution", choices=("smooth", "polynomial"),
                           default="smooth")
    return parser


def _config_from_file(path):
    values = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in ("=", ":", None):
                parts = line.split(sep, 1) if sep else line.split(None, 1)
                if len(parts) == 2:
                    break
            else:
                raise ValueError(f"{path}:{ln}: expected 'key value'")
            key, value = parts[0].strip(), parts[1].strip()
            values[key] = value

    def pop(key, conv=str, default=None):
        return conv(values.pop(key)) if key in values else default

    kwargs = {
        "experiment": pop("experiment"),
        "order": pop("order", int, 1),
        "lam": pop("lambda", float, 3.0),
        "f": pop("f", float, 0.2),
        "u": pop("u", float, 1.5),
        "levels": pop("levels", _parse_levels),
        "mesh_file": pop("mesh"),
        "constraint": pop("constraint"),
        "correction": pop("correction", lambda s: s.lower() not in
                          ("0", "false", "no", "off"), True),
        "out_dir": pop("out", str, "."),
        "solution": pop("solution", str, "smooth"),
        "diagonal": pop("diagonal", str, "upper-left-to-lower-right"),
    }
    if kwargs["experiment"] is None:
        raise ValueError(f"{path}: missing 'experiment' key")
    if values:
        raise ValueError(f"{path}: unknown keys {sorted(values)}")
    return ExperimentConfig(**kwargs)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        config = _config_from_file(args.config)
    elif args.experiment is None:
        parser.error("an experiment subcommand or --config is required")
    else:
        fields = {k: v for k, v in vars(args).items()
                  if k not in ("config", "experiment")}
        config = ExperimentConfig(experiment=args.experiment, **fields)
    result = run_experiment(config)
    print(f"wrote {result['csv']}")
    for extra in ("slopes_csv", "corrected_csv", "values_csv"):
        if extra in result:
            print(f"wrote {result[extra]}")
    for level, message in result.get("failures", []):
        print(f"FAILED at {level}: {message}", file=sys.stderr)
    return 1 if result.get("failures") else 0


if __name__ == "__main__":
    sys.exit(main())
