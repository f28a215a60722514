"""Single versioned run-configuration document.

One JSON file aggregates the per-module configs; unknown keys are rejected
and the version is checked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dataset import CollectConfig
from .episode import SimConfig
from .evaluation import AblateConfig
from .model import ModelConfig, TrainConfig

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


def _build(cls, payload: dict, path: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: expected an object")
    allowed = {f.name for f in fields(cls)}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for f in fields(cls):
        if f.name in payload:
            value = payload[f.name]
            if isinstance(value, list):
                value = tuple(value)
            kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    out_dir: str = "runs"
    collect: CollectConfig = field(default_factory=CollectConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    ablate: AblateConfig = field(default_factory=AblateConfig)


_SECTIONS = {
    "collect": CollectConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "sim": SimConfig,
    "ablate": AblateConfig,
}


def run_config_from_json(payload: dict) -> RunConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config: expected a JSON object")
    allowed = {"version", "seed", "out_dir", *_SECTIONS}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    version = payload.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"config: unsupported version {version} "
                          f"(expected {CONFIG_VERSION})")
    kwargs = {"version": version,
              "seed": int(payload.get("seed", 0)),
              "out_dir": str(payload.get("out_dir", "runs"))}
    for name, cls in _SECTIONS.items():
        if name in payload:
            section = dict(payload[name]) if isinstance(payload[name], dict) \
                else payload[name]
            if name == "collect" and isinstance(section, dict):
                from .dataset import AugmentConfig
                from .expert import ExpertConfig
                if "augment" in section:
                    section["augment"] = _build(AugmentConfig, section["augment"],
                                                "config.collect.augment")
                if "expert" in section:
                    section["expert"] = _build(ExpertConfig, section["expert"],
                                               "config.collect.expert")
            kwargs[name] = _build(cls, section, f"config.{name}")
    return RunConfig(**kwargs)


def load_run_config(path: str | Path) -> RunConfig:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return run_config_from_json(payload)
