"""Experiment configuration: a flat key=value file plus CLI overrides.

Grammar, one setting per line:

    # comment (also allowed after a value)
    key = value

Keys are lowercase with underscores.  Values are parsed by the declared
type of the key; unknown keys are rejected before any computation, as are
values outside their documented ranges.  Booleans accept true/false,
yes/no, on/off, 1/0.  The resolved configuration is echoed as JSON into
the run manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields


class ConfigError(ValueError):
    """Invalid configuration: unknown key, bad type, or out of range."""


EXPERIMENTS = ("simulate", "steady", "spectrum", "entropy", "sweep", "converge")
INIT_KINDS = ("maxwellian", "shell", "mixture")
ROUTES = ("deterministic", "dsmc")


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int(s: str) -> int:
    val = float(s)
    if val != int(val):
        raise ValueError(f"not an integer: {s!r}")
    return int(val)


def _parse_floats(s: str) -> tuple:
    s = s.strip()
    if not s:
        return ()
    return tuple(float(x) for x in s.split(","))


# key -> (parser, default, range check, documented range)
SCHEMA = {
    "experiment": (str, "simulate", lambda v: v in EXPERIMENTS,
                   "one of " + "|".join(EXPERIMENTS)),
    "alpha": (float, 1.0, lambda v: 0.0 < v <= 1.0, "(0, 1]"),
    "alphas": (_parse_floats, (0.8, 0.9, 0.95, 0.99),
               lambda v: all(0.0 < a <= 1.0 for a in v),
               "comma list, each in (0, 1]"),
    "u0": (_parse_floats, (0.0, 0.0, 0.0), lambda v: len(v) == 3,
           "three comma-separated components"),
    "theta0": (float, 1.0, lambda v: v > 0.0, "> 0"),
    "weight_a": (float, 0.5, lambda v: v >= 0.0, ">= 0"),
    "init": (str, "maxwellian", lambda v: v in INIT_KINDS,
             "one of " + "|".join(INIT_KINDS)),
    "init_theta": (float, 2.0, lambda v: v > 0.0, "> 0"),
    "init_r0": (float, 1.0, lambda v: v > 0.0, "> 0"),
    "n_particles": (_parse_int, 100000, lambda v: 1000 <= v <= 10 ** 8,
                    "[1e3, 1e8]"),
    "dt": (float, 0.01, lambda v: 0.0 < v <= 1.0, "(0, 1]"),
    "t_end": (float, 10.0, lambda v: 0.0 < v <= 10000.0, "(0, 1e4]"),
    "t_burn": (float, 6.0, lambda v: 0.0 < v <= 10000.0, "(0, 1e4]"),
    "t_avg": (float, 10.0, lambda v: 0.0 < v <= 10000.0, "(0, 1e4]"),
    "grid_n": (_parse_int, 128, lambda v: 16 <= v <= 1024, "[16, 1024]"),
    "r_max": (float, 0.0, lambda v: v >= 0.0, ">= 0 (0 = automatic)"),
    "n_bins": (_parse_int, 64, lambda v: 8 <= v <= 4096, "[8, 4096]"),
    "tol": (float, 1e-12, lambda v: 0.0 < v <= 1e-2, "(0, 1e-2]"),
    "seed": (_parse_int, 12345, lambda v: v >= 0, ">= 0"),
    "sample_stride": (_parse_int, 5, lambda v: v >= 1, ">= 1"),
    "n_workers": (_parse_int, 1, lambda v: 1 <= v <= 64, "[1, 64]"),
    "out_dir": (str, "runs", lambda v: bool(v), "non-empty path"),
    "cache_dir": (str, "", lambda v: True, "path (empty = <out_dir>/cache)"),
    "route": (str, "deterministic", lambda v: v in ROUTES,
              "one of " + "|".join(ROUTES)),
    "splitting": (_parse_bool, False, lambda v: True, "true|false"),
    "splitting_r": (float, 0.0, lambda v: v >= 0.0, ">= 0 (0 = calibrate)"),
    "balance_points": (_parse_int, 24, lambda v: 0 <= v <= 200, "[0, 200]"),
    "mc_pairs": (_parse_int, 20000, lambda v: 1000 <= v <= 10 ** 7,
                 "[1e3, 1e7]"),
}


@dataclass
class ExperimentConfig:
    experiment: str = "simulate"
    alpha: float = 1.0
    alphas: tuple = (0.8, 0.9, 0.95, 0.99)
    u0: tuple = (0.0, 0.0, 0.0)
    theta0: float = 1.0
    weight_a: float = 0.5
    init: str = "maxwellian"
    init_theta: float = 2.0
    init_r0: float = 1.0
    n_particles: int = 100000
    dt: float = 0.01
    t_end: float = 10.0
    t_burn: float = 6.0
    t_avg: float = 10.0
    grid_n: int = 128
    r_max: float = 0.0
    n_bins: int = 64
    tol: float = 1e-12
    seed: int = 12345
    sample_stride: int = 5
    n_workers: int = 1
    out_dir: str = "runs"
    cache_dir: str = ""
    route: str = "deterministic"
    splitting: bool = False
    splitting_r: float = 0.0
    balance_points: int = 24
    mc_pairs: int = 20000

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f.name] = list(val) if isinstance(val, tuple) else val
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def parse_config_text(text: str) -> dict:
    """Raw key -> string-value pairs from the flat file format."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, value = body.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def load_config_file(path: str) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


def resolve(raw: dict) -> ExperimentConfig:
    """Parse and range-check raw string values against the schema."""
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError("unknown keys: %s (valid: %s)"
                          % (", ".join(unknown), ", ".join(sorted(SCHEMA))))
    values = {}
    for key, (parser, default, check, doc) in SCHEMA.items():
        if key in raw and raw[key] is not None:
            text = raw[key]
            try:
                val = parser(text) if isinstance(text, str) else text
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{key}: cannot parse {text!r} ({exc})") from exc
        else:
            val = default
        if not check(val):
            raise ConfigError(f"{key}: value {val!r} outside documented "
                              f"range {doc}")
        values[key] = val
    cfg = ExperimentConfig(**values)
    _cross_checks(cfg)
    return cfg


def _cross_checks(cfg: ExperimentConfig) -> None:
    centered = all(c == 0.0 for c in cfg.u0)
    if cfg.experiment in ("steady", "spectrum", "entropy", "sweep", "converge") \
            and not centered:
        raise ConfigError("experiment %r works in the bath frame; set u0 = 0,0,0"
                          % cfg.experiment)
    if cfg.experiment == "sweep" and len(cfg.alphas) == 0:
        raise ConfigError("sweep needs a non-empty alphas list")
    if cfg.dt > cfg.t_end:
        raise ConfigError("dt exceeds t_end; nothing would run")
    if cfg.r_max > 0.0 and cfg.r_max < 4.0 * (cfg.theta0 ** 0.5):
        raise ConfigError("r_max below 4 sqrt(theta0) truncates the bulk of "
                          "the distribution")


def config_summary(cfg: ExperimentConfig) -> str:
    """Human-readable resolved settings, one per line, stable order."""
    lines = []
    for key in sorted(SCHEMA):
        val = getattr(cfg, key)
        if isinstance(val, tuple):
            val = ",".join("%g" % v for v in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
