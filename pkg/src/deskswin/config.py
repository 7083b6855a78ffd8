"""Run configuration and its TOML serialization."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import toml

from .attention import ConfigError
from .data import DatasetSpec
from .discriminator import DiscriminatorConfig
from .generator import GeneratorConfig
from .training import AugmentationSpec, TrainConfig

SECTIONS = {"generator": GeneratorConfig, "discriminator": DiscriminatorConfig,
            "train": TrainConfig, "augment": AugmentationSpec, "dataset": DatasetSpec}


def desk_generator(size: int = 16) -> GeneratorConfig:
    """Generator defaults trimmed to ``size`` (scales 4, 8, ..., size)."""
    g = GeneratorConfig(target_size=size)
    n = g.n_scales
    g.dims, g.windows, g.heads = g.dims[:n], g.windows[:n], g.heads[:n]
    return g


@dataclass
class RunSettings:
    out_dir: str = "runs/default"
    checkpoint_interval: int = 100
    eval_interval: int = 100
    eval_samples: int = 256
    threads: int = 1


@dataclass
class RunConfig:
    generator: GeneratorConfig = field(default_factory=desk_generator)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentationSpec = field(default_factory=AugmentationSpec)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    run: RunSettings = field(default_factory=RunSettings)

    @property
    def seed(self) -> int:
        return self.train.seed

    @seed.setter
    def seed(self, value: int) -> None:
        self.train.seed = int(value)

    @property
    def out_dir(self) -> str:
        return self.run.out_dir

    def validate(self) -> "RunConfig":
        try:
            self.generator.validate()
            self.discriminator.validate(self.generator.target_size)
            self.train.validate()
            self.augment.validate()
            self.dataset.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.dataset.size != self.generator.target_size:
            raise ConfigError(f"dataset size {self.dataset.size} != generator target "
                              f"{self.generator.target_size}")
        if self.run.checkpoint_interval < 0 or self.run.eval_interval < 0:
            raise ConfigError("intervals must be >= 0")
        if self.run.eval_samples < 2:
            raise ConfigError("eval_samples must be >= 2")
        return self

    def to_dict(self) -> dict:
        return {f.name: dataclasses.asdict(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        types = dict(SECTIONS, run=RunSettings)
        unknown = set(raw) - set(types)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        parts = {}
        for name, typ in types.items():
            section = raw.get(name, {})
            if not isinstance(section, dict):
                raise ConfigError(f"[{name}] must be a table")
            names = {f.name: f for f in dataclasses.fields(typ)}
            bad = set(section) - set(names)
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
            base = typ() if name != "generator" else desk_generator(
                int(raw.get("dataset", {}).get("size", 16)))
            values = {}
            for key, value in section.items():
                default = getattr(base, key)
                values[key] = _coerce(name, key, value, default)
            parts[name] = dataclasses.replace(base, **values)
        return cls(**parts)


def _coerce(section, key, value, default):
    where = f"[{section}] {key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        return list(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    return value


def dumps(cfg: RunConfig) -> str:
    return toml.dumps(cfg.to_dict())


def loads(text: str) -> RunConfig:
    try:
        raw = toml.loads(text)
    except toml.TomlDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return RunConfig.from_dict(raw)


def load(path) -> RunConfig:
    return loads(Path(path).read_text())


def save(cfg: RunConfig, path) -> None:
    from .io import atomic_write_bytes

    atomic_write_bytes(path, dumps(cfg).encode())
