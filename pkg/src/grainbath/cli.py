"""Command-line interface.

Subcommands: simulate, steady, spectrum, entropy, sweep, converge, and
validate-config.  Settings come from an optional flat config file
(--config) overridden by per-key flags (--n-particles 50000 overrides
n_particles).  Exit codes: 0 success, 2 configuration or validation
error, 3 numerical failure or raised numerical flags.
"""

from __future__ import annotations

import argparse
import sys

from .config import (SCHEMA, ConfigError, EXPERIMENTS, config_summary,
                     load_config_file, resolve)
from .experiments import NumericalFailure, run_experiment

_HELP = {
    "simulate": "march a particle ensemble and write its trajectory",
    "steady": "compute the steady state by the configured route",
    "spectrum": "assemble the linearized operator and report its spectrum",
    "entropy": "record the relative-entropy decay of a relaxation run",
    "sweep": "run the per-alpha pipeline and merge the trend tables",
    "converge": "fit the relaxation rate against the spectral gap",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grainbath",
        description="granular gas in a thermal bath: simulation and analysis")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--config", metavar="FILE",
                        help="flat key=value settings file")
        for key, (_, default, _check, doc) in sorted(SCHEMA.items()):
            if key == "experiment":
                continue
            sp.add_argument("--" + key.replace("_", "-"), dest=key,
                            metavar="VALUE",
                            help=f"{doc} (default {default!r})")
    vp = sub.add_parser("validate-config",
                        help="parse and range-check a config file")
    vp.add_argument("config_file", help="flat key=value settings file")
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0

    if args.command == "validate-config":
        try:
            cfg = resolve(load_config_file(args.config_file))
        except (ConfigError, OSError, ValueError) as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return 2
        print(config_summary(cfg), end="")
        return 0

    try:
        raw = {}
        if args.config:
            raw.update(load_config_file(args.config))
        for key in SCHEMA:
            if key == "experiment":
                continue
            val = getattr(args, key, None)
            if val is not None:
                raw[key] = val
        raw["experiment"] = args.command
        cfg = resolve(raw)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    try:
        code, summary, out_dir = run_experiment(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, RuntimeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    flags = summary.get("flags", [])
    print("wrote %s/summary.json (flags: %s)"
          % (out_dir, ", ".join(flags) if flags else "none"))
    return code


if __name__ == "__main__":
    sys.exit(cli_main())
