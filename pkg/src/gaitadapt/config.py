"""Experiment configuration: one nested JSON document covering the encoder
shape, training hyperparameters, and both domain specs.

CLI flags override file values; every run writes back a fully resolved
snapshot so it can be reproduced exactly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import DomainSpec
from .encoder import EncoderShape
from .pipeline import TrainConfig, desk_preset, paper_preset

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """The configuration document is malformed or inconsistent."""


def default_source_spec() -> DomainSpec:
    return DomainSpec(id_prefix="S", height=24, width=24, body_jitter=(0.0, 0.06))


def default_target_spec() -> DomainSpec:
    """Shifted appearance (dilation, noise, scale/shear) and rhythm."""
    return DomainSpec(
        id_prefix="T",
        height=24,
        width=24,
        period=11.0,
        resample=0.8,
        dilate=1,
        noise=0.03,
        scale=(0.94, 1.05),
        shear=0.08,
        body_jitter=(0.0, 0.12),
    )


def separable_source_spec() -> DomainSpec:
    """Source with no walk-to-walk variation at all: every repeat of a walk
    is the same pixels up to condition. Used for pretraining sanity runs."""
    return dataclasses.replace(
        default_source_spec(), body_jitter=(0.0, 0.0), phase_jitter=0.0)


def default_encoder_shape() -> EncoderShape:
    """Sized for the 24x24 synthetic benchmark: 7 pyramid strips of 16."""
    return EncoderShape(height=24, width=24, bands=8, channels=16,
                        scales=3, embed_dim=112)


@dataclass
class ExperimentConfig:
    encoder: EncoderShape = field(default_factory=default_encoder_shape)
    train: TrainConfig = field(default_factory=TrainConfig)
    source: DomainSpec = field(default_factory=default_source_spec)
    target: DomainSpec = field(default_factory=default_target_spec)

    def to_dict(self) -> dict:
        return {
            "format_version": CONFIG_VERSION,
            "encoder": self.encoder.to_dict(),
            "train": dataclasses.asdict(self.train),
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        version = doc.get("format_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config format_version {version!r}")
        try:
            cfg = cls()
            if "encoder" in doc:
                cfg.encoder = EncoderShape.from_dict(doc["encoder"])
            if "train" in doc:
                cfg.train = TrainConfig(**doc["train"])
            if "source" in doc:
                cfg.source = DomainSpec.from_dict(doc["source"])
            if "target" in doc:
                cfg.target = DomainSpec.from_dict(doc["target"])
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        return cfg


def preset_config(name: str) -> ExperimentConfig:
    """'desk' is the minutes-scale CPU recipe; 'paper' the reference recipe."""
    if name == "desk":
        return ExperimentConfig(train=desk_preset())
    if name == "paper":
        return ExperimentConfig(train=paper_preset())
    raise ConfigError(f"unknown preset {name!r}, expected 'paper' or 'desk'")


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return ExperimentConfig.from_dict(doc)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n")


def apply_overrides(cfg: ExperimentConfig, **train_overrides) -> ExperimentConfig:
    """Replace train fields with any non-None overrides (CLI flags)."""
    updates = {k: v for k, v in train_overrides.items() if v is not None}
    if updates:
        cfg.train = dataclasses.replace(cfg.train, **updates)
    return cfg
