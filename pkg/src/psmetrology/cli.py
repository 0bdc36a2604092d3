"""Command-line entry point.

Subcommands write delimited tables (CSV with a JSON metadata sidecar, or a
single JSON document) under ``--out`` and print a short summary. ``--plot``
additionally renders PNG figures from the same tables.

Exit codes: 0 success, 2 configuration error, 3 too many failed rows.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiment
from .config import FORMATS, VARIANTS, ExperimentConfig, load_config
from .errors import ConfigError, InadequateGrid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3

log = logging.getLogger("psmetrology")

_MODES = {"same": ("same",), "sigma3": ("sigma3",), "both": ("same", "sigma3")}
_ESTIMATORS = {"ps": ("ps",), "meter": ("meter",), "joint": ("joint",), "all": ("ps", "meter", "joint")}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML file of configuration keys")
    common.add_argument("--seed", type=_u64, metavar="U64", help="master seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--format", choices=FORMATS, help="table format")
    common.add_argument("--mode", choices=sorted(_MODES), help="post-selection strategy")
    common.add_argument("--estimator", choices=sorted(_ESTIMATORS), help="estimator kind")
    common.add_argument("--variant", choices=VARIANTS, help="likelihood variant for meter and joint")
    common.add_argument("--plot", action="store_true", default=None, help="also render PNG figures")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="psmetrology", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("sweep", parents=[common], help="Monte-Carlo estimator ensembles over theta_i")
    sub.add_parser("calibrate", parents=[common], help="emulate the detector reference calibration")
    sub.add_parser("fisher-curves", parents=[common], help="Fisher information and bounds over theta_i")
    sub.add_parser("oracle-check", parents=[common], help="grid oracle against the closed forms (slow)")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.format is not None:
        overrides["format"] = args.format
    if args.mode is not None:
        overrides["modes"] = _MODES[args.mode]
    if args.estimator is not None:
        overrides["estimators"] = _ESTIMATORS[args.estimator]
    if args.variant is not None:
        overrides["variant"] = args.variant
    if args.plot:
        overrides["plot"] = True
    return config.replace(**overrides) if overrides else config


def _report(paths) -> None:
    for p in paths:
        print(f"wrote {p}")


def cmd_sweep(config: ExperimentConfig) -> int:
    table = experiment.run_sweep(config)
    paths = experiment.emit(table, config.format, config.out_dir, "sweep")
    if config.plot:
        from .plotting import render_sweep

        paths += render_sweep(table, config.out_dir)
    _report(paths)
    frac = experiment.failed_fraction(table)
    print(f"rows: {len(table.rows)}  fully failed: {frac:.3f} (threshold {config.failure_threshold})")
    if frac > config.failure_threshold:
        log.warning("failed-row fraction %.3f exceeds threshold %.3f", frac, config.failure_threshold)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_calibrate(config: ExperimentConfig) -> int:
    res = experiment.calibrate_reference(config)
    meta = experiment.metadata(config, "calibrate")
    row = {
        "d0_true": res.d0_true,
        "d0_hat": res.d0_hat,
        "stderr": res.stderr,
        "n_left": res.n_left,
        "n_right": res.n_right,
        "n_photons": res.n_photons,
        "seed": res.seed,
    }
    table = experiment.ResultTable(list(row), [row], meta)
    _report(experiment.emit(table, config.format, config.out_dir, "calibration"))
    z = (res.d0_hat - res.d0_true) / res.stderr
    print(f"d0_hat = {res.d0_hat:.6e} m  +- {res.stderr:.3e} m  (true {res.d0_true:.6e} m, z = {z:+.2f})")
    return EXIT_OK


def cmd_fisher(config: ExperimentConfig) -> int:
    table = experiment.fisher_curves(config)
    paths = experiment.emit(table, config.format, config.out_dir, "fisher_curves")
    if config.plot:
        from .plotting import render_fisher

        paths += render_fisher(table, config.out_dir)
    _report(paths)
    return EXIT_OK


def cmd_oracle(config: ExperimentConfig) -> int:
    try:
        res = experiment.oracle_check(setups=(config.setup, config.setup.with_perfect_visibility()))
    except InadequateGrid as exc:
        print(f"oracle grid inadequate: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    print(json.dumps(res, indent=2))
    return EXIT_OK


COMMANDS = {
    "sweep": cmd_sweep,
    "calibrate": cmd_calibrate,
    "fisher-curves": cmd_fisher,
    "oracle-check": cmd_oracle,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
