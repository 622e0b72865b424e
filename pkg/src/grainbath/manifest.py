"""Run manifests: the single place where provenance and timestamps live.

Every experiment emits exactly one manifest next to its outputs.  The
manifest records the resolved configuration and its hash, the package
version, the seed tree, wall-clock timestamps, and a checksum for every
input and output file, so any artifact on disk is traceable to exactly
one manifest and reproducible from it (single-worker runs are
byte-identical).  No other output file carries timestamps.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

MANIFEST_NAME = "manifest.json"


def _package_version() -> str:
    try:
        from importlib.metadata import PackageNotFoundError, version
        try:
            return version("grainbath")
        except PackageNotFoundError:
            return "0+unknown"
    except ImportError:
        return "0+unknown"


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config_dict: dict) -> str:
    """Hash of the scientific configuration.

    Output locations and the worker count are excluded: runs of the same
    computation into different directories, or split across a different
    number of workers, must hash alike (results are contractually
    independent of both)."""
    scrubbed = {k: v for k, v in config_dict.items()
                if k not in ("out_dir", "cache_dir", "n_workers")}
    return hashlib.sha256(
        json.dumps(scrubbed, sort_keys=True).encode()).hexdigest()


def derive_seed(seed: int, label: str) -> int:
    """Stable sub-seed for a named sub-run; independent of execution order."""
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2 ** 63)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


@dataclass
class RunManifest:
    experiment: str
    config: dict
    config_hash: str
    code_version: str
    seed: int
    started_at: str
    finished_at: str | None = None
    sub_seeds: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @classmethod
    def start(cls, config_dict: dict) -> "RunManifest":
        return cls(experiment=config_dict.get("experiment", "unknown"),
                   config=config_dict,
                   config_hash=config_hash(config_dict),
                   code_version=_package_version(),
                   seed=int(config_dict.get("seed", 0)),
                   started_at=_utc_now())

    def note_sub_seed(self, label: str) -> int:
        sub = derive_seed(self.seed, label)
        self.sub_seeds[label] = sub
        return sub

    def add_input(self, path: str) -> None:
        self.inputs[os.path.basename(path)] = file_sha256(path)

    def add_output(self, path: str) -> None:
        self.outputs[os.path.basename(path)] = file_sha256(path)

    def finish(self, flags=None) -> None:
        if flags:
            self.flags = sorted(set(self.flags) | set(flags))
        self.finished_at = _utc_now()

    def to_json(self) -> str:
        payload = {
            "experiment": self.experiment,
            "config": self.config,
            "config_hash": self.config_hash,
            "code_version": self.code_version,
            "seed": self.seed,
            "sub_seeds": self.sub_seeds,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "flags": self.flags,
        }
        return json.dumps(payload, indent=1, sort_keys=True)

    def write(self, directory: str) -> str:
        path = os.path.join(directory, MANIFEST_NAME)
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")
        return path

    @classmethod
    def read(cls, path: str) -> "RunManifest":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(experiment=payload["experiment"], config=payload["config"],
                   config_hash=payload["config_hash"],
                   code_version=payload["code_version"], seed=payload["seed"],
                   started_at=payload["started_at"],
                   finished_at=payload.get("finished_at"),
                   sub_seeds=payload.get("sub_seeds", {}),
                   inputs=payload.get("inputs", {}),
                   outputs=payload.get("outputs", {}),
                   flags=payload.get("flags", []))
