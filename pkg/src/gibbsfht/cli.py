"""Command line entry point: ``gibbsfht {sample,fit,diagnose,pipeline}``.

Exit codes: 0 success, 1 invalid input (config, file format, arguments),
2 numerical abort (diverged particles, singular sketch systems).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .config import RunConfig, load
from .errors import ConfigError, DivergenceError, FormatError, SingularGaugeError
from .pipeline import cmd_diagnose, cmd_fit, cmd_sample, write_manifest

log = logging.getLogger("gibbsfht")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


def _pair(text):
    try:
        i, j = (int(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'I,J', got {text!r}") from None
    if i < 1 or j < 1:
        raise argparse.ArgumentTypeError("pair indices are 1-based")
    return i - 1, j - 1


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _workers(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return value


class _Parser(argparse.ArgumentParser):
    """Argument errors are invalid input, so they exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="gibbsfht", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML run config with dotted keys")
    common.add_argument("--seed", type=_seed, help="master seed (overrides io.seed)")
    common.add_argument("--workers", type=_workers, help="worker processes (overrides io.workers)")
    common.add_argument("--out", help="output directory (overrides io.out)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", parents=[common], help="burn-in + ensemble AIS sampling")
    p.add_argument("--baseline", action="store_true", help="also run plain MALA at the target beta")

    p = sub.add_parser("fit", parents=[common], help="fit an FHT model to a sample file")
    p.add_argument("--samples", help="sample file (default OUT/samples.gls)")

    p = sub.add_parser("diagnose", parents=[common], help="ratio, moments and marginals")
    p.add_argument("--samples", help="sample file")
    p.add_argument("--model", help="model file")
    p.add_argument("--baseline-samples", help="baseline sample file")
    p.add_argument("--pair", type=_pair, action="append", default=[], metavar="I,J",
                   help="1-based site pair for moments and marginals (repeatable)")

    p = sub.add_parser("pipeline", parents=[common], help="sample, fit and diagnose")
    p.add_argument("--baseline", action="store_true", help="also run plain MALA at the target beta")
    p.add_argument("--pair", type=_pair, action="append", default=[], metavar="I,J",
                   help="1-based site pair for moments and marginals (repeatable)")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load(args.config) if args.config else None
    if cfg is None:
        if args.command != "diagnose":
            raise ConfigError(f"{args.command} needs --config")
        cfg = RunConfig().replace("sampler", scale=1.0)
    io = {}
    if args.seed is not None:
        io["seed"] = args.seed
    if args.workers is not None:
        io["workers"] = args.workers
    if args.out is not None:
        io["out"] = args.out
    return cfg.replace("io", **io) if io else cfg


def run(args) -> int:
    cfg = resolve_config(args)
    out = cfg.io.out
    write_manifest(out, args.command, cfg)
    try:
        if args.command in ("sample", "pipeline"):
            cmd_sample(cfg, out, args.baseline)
        if args.command == "fit":
            cmd_fit(cfg, args.samples or os.path.join(out, "samples.gls"), out)
        if args.command == "pipeline":
            model = cmd_fit(cfg, os.path.join(out, "samples.gls"), out)
            base = os.path.join(out, "baseline_samples.gls") if args.baseline else None
            cmd_diagnose(out, os.path.join(out, "samples.gls"), model, args.pair, base,
                         cfg.io.seed)
        if args.command == "diagnose":
            cmd_diagnose(out, args.samples, args.model, args.pair, args.baseline_samples,
                         cfg.io.seed)
    except (DivergenceError, SingularGaugeError, FloatingPointError) as exc:
        with open(os.path.join(out, "abort.json"), "w", encoding="utf-8") as fh:
            json.dump({"command": args.command, "error": type(exc).__name__,
                       "message": str(exc)}, fh, indent=2)
            fh.write("\n")
        raise
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (DivergenceError, SingularGaugeError, FloatingPointError) as exc:
        log.error("numerical abort: %s", exc)
        return EXIT_NUMERICAL
    except (ConfigError, FormatError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
