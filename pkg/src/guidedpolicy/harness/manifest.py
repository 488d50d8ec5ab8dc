"""Run manifests: one JSON file per stage directory listing what it produced."""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field

from .. import __version__
from ..errors import ConfigurationError

MANIFEST = "manifest.json"


class StaleArtifact(ConfigurationError):
    """An upstream artifact was produced under a different configuration."""


@dataclass
class RunManifest:
    stage: str
    config_hash: str
    seed: int
    versions: dict = field(default_factory=dict)
    status: str = "started"
    started: float = 0.0
    finished: float | None = None
    files: list[str] = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def write(self, run_dir) -> None:
        tmp = os.path.join(run_dir, MANIFEST + ".tmp")
        with open(tmp, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
        os.replace(tmp, os.path.join(run_dir, MANIFEST))

    @classmethod
    def read(cls, run_dir) -> "RunManifest":
        with open(os.path.join(run_dir, MANIFEST)) as fh:
            return cls(**json.load(fh))

    @classmethod
    def exists(cls, run_dir) -> bool:
        return os.path.exists(os.path.join(run_dir, MANIFEST))

    def complete(self, run_dir) -> bool:
        return self.status == "completed" and all(os.path.exists(os.path.join(run_dir, f))
                                                  for f in self.files)


def versions() -> dict:
    from ..dialenv.corpus import CORPUS_VERSION
    from ..rewardgan import REWARD_FORMAT_VERSION
    return {"package": __version__, "corpus": CORPUS_VERSION, "reward_format": REWARD_FORMAT_VERSION}


def begin(run_dir, stage: str, config_hash: str, seed: int, force: bool = False,
          inputs: dict | None = None) -> RunManifest | None:
    """Open a stage directory.

    Returns None when a completed run with the same hash already exists (reuse).
    A run under a different hash is only replaced with ``force``; its listed
    files are removed first so outputs never mix.
    """
    os.makedirs(run_dir, exist_ok=True)
    if RunManifest.exists(run_dir):
        old = RunManifest.read(run_dir)
        if old.config_hash == config_hash and old.complete(run_dir) and not force:
            return None
        if old.config_hash != config_hash and not force:
            raise ConfigurationError(f"{run_dir} holds a {old.stage} run with config {old.config_hash}; "
                                     f"pass --force to replace it")
        for f in old.files:
            p = os.path.join(run_dir, f)
            if os.path.exists(p):
                os.remove(p)
    m = RunManifest(stage, config_hash, int(seed), versions(), "started", time.time(),
                    inputs=dict(inputs or {}))
    m.write(run_dir)
    return m


def finish(m: RunManifest, run_dir, files: list[str], info: dict | None = None,
           status: str = "completed") -> RunManifest:
    m.files = sorted(set(files))
    m.status = status
    m.finished = time.time()
    m.info.update(info or {})
    m.write(run_dir)
    return m


def require(run_dir, stage: str, config_hash: str) -> RunManifest:
    """Manifest of a finished upstream stage; checks it matches ``config_hash``."""
    if not RunManifest.exists(run_dir):
        raise ConfigurationError(f"missing {stage} output in {run_dir}; run that stage first")
    m = RunManifest.read(run_dir)
    if not m.complete(run_dir):
        raise ConfigurationError(f"{stage} run in {run_dir} did not complete")
    if m.config_hash != config_hash:
        raise StaleArtifact(f"{stage} output in {run_dir} was built with config {m.config_hash}, "
                            f"current config gives {config_hash}")
    if m.versions != versions():
        raise StaleArtifact(f"{stage} output in {run_dir} has versions {m.versions}, expected {versions()}")
    return m
