"""Command-line entry point: one subcommand per experiment.

Exit status is 0 when every check passes, 1 when any trial violates a
tolerance, 2 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .exceptions import ConfigError
from .harness import EXPERIMENTS, ExperimentConfig, default_config, emit, run

EXIT_PASS = 0
EXIT_VIOLATION = 1
EXIT_ERROR = 2

log = logging.getLogger("siegel_da")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _param(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="siegel-da", description="Numerical checks for the Drury-Arveson space on the Siegel domain.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="experiment", metavar="EXPERIMENT", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} suite")
        p.add_argument("--config", help="JSON file mirroring ExperimentConfig")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--out", default="-", help="report path ('-' for stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--grid.h", dest="grid_h", type=float, help="grid spacing")
        p.add_argument("--grid.alpha-max", dest="grid_alpha_max", type=int)
        p.add_argument("--grid.lambda-min", dest="grid_lambda_min", type=float)
        p.add_argument("--d", type=int, help="dimension (default alternates 1 and 2 where supported)")
        p.add_argument("--dim", type=int, help="largest matrix size")
        p.add_argument("--epsilon", type=float, help="smallest dissipativity margin")
        p.add_argument("--poly-degree", type=int)
        p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                       help="experiment-specific option; VALUE is parsed as JSON when possible")
    return parser


def config_from_args(args) -> ExperimentConfig:
    """Defaults, then the config file, then command-line flags."""
    cfg = default_config(args.experiment)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if isinstance(data, dict) and data.get("experiment", args.experiment) != args.experiment:
            raise ConfigError("experiment", f"config file is for {data['experiment']!r}, not {args.experiment!r}")
        cfg = ExperimentConfig.from_dict(data, base=cfg)
    overrides = {}
    grid = {}
    if args.grid_h is not None:
        grid["spacing"] = args.grid_h
    if args.grid_alpha_max is not None:
        grid["alpha_max"] = args.grid_alpha_max
    if args.grid_lambda_min is not None:
        grid["lambda_min"] = args.grid_lambda_min
    if grid:
        overrides["grid"] = grid
    for flag, field in (("seed", "seed"), ("trials", "trials"), ("d", "d"), ("dim", "dim"),
                        ("epsilon", "epsilon"), ("poly_degree", "poly_degree")):
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = value
    if args.param:
        overrides["params"] = dict(args.param)
    return ExperimentConfig.from_dict(overrides, base=cfg) if overrides else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(args)
        log.info("running %s with %d trials", cfg.experiment, cfg.trials)
        report = run(cfg)
        text = emit(report, args.format, None if args.out == "-" else args.out)
        if args.out == "-":
            sys.stdout.write(text)
    except ConfigError as exc:
        print(f"siegel-da: config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # runtime failures map to status 2, never to a pass
        print(f"siegel-da: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    status = "PASS" if report.passed else "FAIL"
    print(f"{cfg.experiment}: {status} ({report.violations} violations in {len(report.records)} trials)",
          file=sys.stderr)
    return EXIT_PASS if report.passed else EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
