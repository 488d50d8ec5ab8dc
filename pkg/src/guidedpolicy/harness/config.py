"""Experiment configuration: INI files, built-in profiles, canonical hashing and
named random substreams.

An INI file has one section per stage (``experiment``, ``env``, ``corpus``,
``vae``, ``reward``, ``agent``, ``transfer``); any key left out keeps the
profile default. Values are parsed with ``ast.literal_eval`` falling back to
the raw string, so ``hidden = (128,)`` and ``mode = onehot`` both work.
"""

from __future__ import annotations

import ast
import configparser
import hashlib
import io
import zlib
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..agents.train import AgentConfig
from ..dialenv.env import EnvConfig
from ..dialenv.schema import DomainSchema, desk_schemas, load_schemas, paper_shape_schemas
from ..errors import ConfigurationError
from ..rewardgan import RewardConfig
from ..statevae import VaeConfig

STREAMS = ("corpus", "vae", "gan", "agent", "eval", "transfer")


@dataclass
class CorpusConfig:
    n_episodes: int = 8_000
    noise: float = 0.1
    catalog_size: int = 60


@dataclass
class ExperimentSettings:
    profile: str = "desk"
    seed: int = 0
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7)
    output_dir: str = "runs"
    schema_file: str = ""
    algo: str = "dqn"
    reward_source: str = "gan_vae"
    budget_frames: int = 15_000


@dataclass
class TransferSettings:
    held_out: str = "hotel"
    budget_frames: int = 4_000
    include_onehot: bool = True


@dataclass
class ExperimentConfig:
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    env: EnvConfig = field(default_factory=EnvConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    vae: VaeConfig = field(default_factory=VaeConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    transfer: TransferSettings = field(default_factory=TransferSettings)

    SECTIONS = ("experiment", "env", "corpus", "vae", "reward", "agent", "transfer")

    def schemas(self) -> list[DomainSchema]:
        if self.experiment.schema_file:
            return load_schemas(self.experiment.schema_file)
        return paper_shape_schemas() if self.experiment.profile == "paper-shape" else desk_schemas()

    def as_dict(self) -> dict[str, dict]:
        return {s: {f.name: getattr(getattr(self, s), f.name) for f in fields(getattr(self, s))}
                for s in self.SECTIONS}

    def canonical(self, parts=None) -> str:
        """Sorted ``section.key=repr(value)`` lines; key order in a file never matters.

        ``parts`` restricts the output to whole sections (``"vae"``) or single
        keys (``"experiment.seed"``).
        """
        d = self.as_dict()
        lines = [f"{s}.{k}={_canon(v)!r}" for s in d for k, v in d[s].items()]
        if parts is not None:
            lines = [ln for ln in lines if any(ln.startswith(p + ("=" if "." in p else ".")) for p in parts)]
        return "\n".join(sorted(lines))

    def hash(self, parts=None, extra: str = "") -> str:
        return hashlib.sha256((self.canonical(parts) + extra).encode()).hexdigest()[:16]

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for s, kv in self.as_dict().items():
            cp[s] = {k: "" if v is None else repr(v) if not isinstance(v, str) else v for k, v in kv.items()}
        out = io.StringIO()
        cp.write(out)
        return out.getvalue()

    def rng(self, stream: str, seed: int | None = None) -> np.random.Generator:
        return substream(self.experiment.seed if seed is None else seed, stream)


def _canon(v):
    if isinstance(v, (list, tuple)):
        return tuple(_canon(x) for x in v)
    if isinstance(v, float) and v.is_integer():
        return int(v) if abs(v) < 2**53 else v
    return v


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named stage, derived from the root seed."""
    if name not in STREAMS:
        raise ConfigurationError(f"unknown random stream {name!r}; have {STREAMS}")
    ss = np.random.SeedSequence(int(root_seed), spawn_key=(zlib.crc32(name.encode()),))
    return np.random.default_rng(ss)


def profile(name: str) -> ExperimentConfig:
    if name == "desk":
        return ExperimentConfig()
    if name == "paper-shape":
        return ExperimentConfig(
            experiment=ExperimentSettings(profile="paper-shape", budget_frames=500_000),
            env=EnvConfig(state_dim=392),
            corpus=CorpusConfig(n_episodes=10_000, catalog_size=300),
            transfer=TransferSettings(budget_frames=100_000),
        )
    raise ConfigurationError(f"unknown profile {name!r}; use desk or paper-shape")


def _parse(raw: str):
    if raw == "":
        return None
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def _coerce(section: str, key: str, current, value):
    if isinstance(current, bool):
        if isinstance(value, str):
            value = value.lower() in ("1", "true", "yes", "on")
        return bool(value)
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigurationError(f"[{section}] {key}: expected an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if not isinstance(value, (int, float)):
            raise ConfigurationError(f"[{section}] {key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(current, tuple):
        if isinstance(value, (int, float, str)):
            value = (value,)
        return tuple(value) if value is not None else None
    if isinstance(current, str):
        return "" if value is None else str(value)
    return value


def apply(config: ExperimentConfig, values: dict[str, dict]) -> ExperimentConfig:
    """Return a copy with ``{section: {key: value}}`` overrides applied."""
    out = config
    for section, kv in values.items():
        if section not in config.SECTIONS:
            raise ConfigurationError(f"unknown config section [{section}]")
        obj = getattr(out, section)
        names = {f.name for f in fields(obj)}
        updates = {}
        for k, v in kv.items():
            if k not in names:
                raise ConfigurationError(f"unknown key {k!r} in [{section}]")
            updates[k] = _coerce(section, k, getattr(obj, k), v)
        out = replace(out, **{section: replace(obj, **updates)})
    return out


def load_config(path=None, text: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Profile defaults, then the INI file (or text), then explicit overrides."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"config file {path} not found") from None
    elif text is not None:
        cp.read_string(text)
    values = {s: {k: _parse(v) for k, v in cp[s].items()} for s in cp.sections()}
    for s, kv in (overrides or {}).items():
        values.setdefault(s, {}).update(kv)
    name = values.get("experiment", {}).get("profile", "desk")
    return apply(profile(name), values)
