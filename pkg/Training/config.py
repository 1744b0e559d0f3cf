from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Any

from Engine.errors import ConfigurationError


CONDITIONS = ("audio", "text", "mixed")
LR_SCHEDULES = ("constant",)

FEW_SHOT_OVERRIDES = {"lr": 1e-5, "batch_size": 32, "epochs": 20}


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 128
    epochs: int = 100
    uncond_fraction: float = 0.1
    grad_clip: float = 1.0
    lr_schedule: str = "constant"
    condition: str = "audio"
    amp: bool = False
    num_workers: int = 0
    latent_cache: int = 1024
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.uncond_fraction <= 1.0:
            raise ConfigurationError(f"uncond_fraction must be in [0, 1], got {self.uncond_fraction}")
        if self.lr <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ConfigurationError("lr, batch_size and epochs must be positive")
        if self.weight_decay < 0 or self.grad_clip <= 0:
            raise ConfigurationError("weight_decay must be >= 0 and grad_clip > 0")
        if self.latent_cache < 0:
            raise ConfigurationError(f"latent_cache must be >= 0, got {self.latent_cache}")
        if self.condition not in CONDITIONS:
            raise ConfigurationError(f"condition must be one of {CONDITIONS}, got {self.condition!r}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigurationError(f"only a constant learning rate is supported, got {self.lr_schedule!r}")

    def few_shot(self, **overrides: Any) -> "TrainConfig":
        """Few-shot fine-tuning settings: lr 1e-5, batch 32, 20 epochs unless overridden."""
        return replace(self, **{**FEW_SHOT_OVERRIDES, **overrides})

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)
