"""Experiment configuration: YAML file, dotted overrides, then the explicit seed.

Precedence is preset < file < `--set key=value` overrides < `--seed`. A file
may name its starting preset with a top-level `preset:` key.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

import torch
import yaml

from Engine.errors import ConfigurationError
from Engine.sampler import SamplerConfig
from Engine.schedule import NoiseSchedule, build_schedule, rescale_terminal
from Model.backbone import BackboneConfig
from Synthesis.corpus import IngestConfig
from Synthesis.dataset import SynthConfig
from Synthesis.toy import ToyCorpusConfig
from Training.config import FEW_SHOT_OVERRIDES, TrainConfig


DEVICE = os.getenv("TSEXTRACT_DEVICE", "auto")
WORKDIR = os.getenv("TSEXTRACT_WORKDIR", "runs")


@dataclass
class DiffusionConfig:
    T: int = 1000
    beta_start: float = 0.00085
    beta_end: float = 0.012
    rescale: bool = True

    def build(self) -> NoiseSchedule:
        schedule = build_schedule(self.T, self.beta_start, self.beta_end)
        return rescale_terminal(schedule) if self.rescale else schedule


@dataclass
class FinetuneConfig:
    lr: float = FEW_SHOT_OVERRIDES["lr"]
    batch_size: int = FEW_SHOT_OVERRIDES["batch_size"]
    epochs: int = FEW_SHOT_OVERRIDES["epochs"]

    def overrides(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class PluginConfig:
    codec: str = "filterbank"
    codec_asset: Optional[str] = None
    embedder: str = "logmel"
    embedder_asset: Optional[str] = None
    classifier_asset: Optional[str] = None


@dataclass
class ExperimentConfig:
    data: SynthConfig = field(default_factory=SynthConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    toy: ToyCorpusConfig = field(default_factory=ToyCorpusConfig)
    model: BackboneConfig = field(default_factory=BackboneConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    plugins: PluginConfig = field(default_factory=PluginConfig)
    device: str = DEVICE
    workdir: str = WORKDIR
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def resolved_device(self) -> str:
        if self.device == "auto":
            return "cuda" if torch.cuda.is_available() else "cpu"
        return self.device


def preset(name: str = "base") -> ExperimentConfig:
    cfg = ExperimentConfig()
    if name == "base":
        return cfg
    if name == "toy":
        cfg.model = BackboneConfig.preset("toy")
        cfg.diffusion.T = 200
        cfg.sampler.steps = 25
        cfg.data.duration = 2.0
        cfg.data.mixtures_per_file = 10
        cfg.data.eval_mixtures_per_file = 3
        cfg.ingest.holdout_classes = ["pulse_beeps"]
        cfg.train.batch_size = 32
        cfg.train.epochs = 60
        cfg.train.lr = 2e-4
        return cfg
    raise ConfigurationError(f"unknown preset {name!r}; expected 'base' or 'toy'")


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _coerce(value: Any, current: Any, key: str) -> Any:
    try:
        if isinstance(current, bool):
            if isinstance(value, str):
                lowered = value.lower()
                if lowered not in {"true", "false", "yes", "no", "1", "0"}:
                    raise ValueError(value)
                return lowered in {"true", "yes", "1"}
            return bool(value)
        if isinstance(current, int) and not isinstance(value, bool):
            as_float = float(value)
            if as_float != int(as_float):
                raise ValueError(value)
            return int(as_float)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, tuple):
            return tuple(float(v) for v in value)
        if isinstance(current, list):
            if not isinstance(value, (list, tuple)):
                raise ValueError(value)
            return list(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: cannot use {value!r} where {type(current).__name__} is expected") from None
    return value


def _assign(target: Any, key: str, value: Any, prefix: str = "") -> None:
    names = {f.name for f in dataclasses.fields(target)}
    dotted = f"{prefix}{key}"
    if key not in names:
        raise ConfigurationError(f"unknown configuration key {dotted!r}")
    current = getattr(target, key)
    if dataclasses.is_dataclass(current):
        if not isinstance(value, dict):
            raise ConfigurationError(f"{dotted} is a section; give it a mapping")
        for sub_key, sub_value in value.items():
            _assign(current, str(sub_key), sub_value, f"{dotted}.")
        return
    setattr(target, key, _coerce(value, current, dotted))


def apply_mapping(cfg: ExperimentConfig, payload: dict[str, Any]) -> ExperimentConfig:
    for key, value in payload.items():
        _assign(cfg, str(key), value)
    return cfg


def apply_overrides(cfg: ExperimentConfig, overrides: Iterable[str]) -> ExperimentConfig:
    """Apply `section.key=value` strings; values are parsed as YAML scalars."""
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"override must look like key=value, got {item!r}")
        value = yaml.safe_load(raw) if raw.strip() else ""
        path = key.strip().split(".")
        nested: Any = value
        for part in reversed(path[1:]):
            nested = {part: nested}
        _assign(cfg, path[0], nested)
    return cfg


def apply_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    cfg.seed = int(seed)
    cfg.train.seed = int(seed)
    cfg.sampler.seed = int(seed)
    return cfg


def load_config(
    path: Optional[str | Path] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
    base: str = "base",
) -> ExperimentConfig:
    payload: dict[str, Any] = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        loaded = yaml.safe_load(text)
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigurationError(f"{path}: configuration must be a mapping")
        payload = dict(loaded or {})
    cfg = preset(str(payload.pop("preset", base)))
    apply_mapping(cfg, payload)
    if "seed" in payload:
        apply_seed(cfg, cfg.seed)
    overrides = list(overrides)
    apply_overrides(cfg, overrides)
    if any(item.partition("=")[0].strip() == "seed" for item in overrides):
        apply_seed(cfg, cfg.seed)
    if seed is not None:
        apply_seed(cfg, seed)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    cfg.data.validate()
    cfg.model.validate()
    cfg.train.validate()
    cfg.sampler.validate(cfg.diffusion.T)
    if cfg.data.sample_rate != cfg.ingest.sample_rate:
        raise ConfigurationError("data.sample_rate and ingest.sample_rate differ")
