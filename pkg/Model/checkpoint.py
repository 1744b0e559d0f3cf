"""Versioned checkpoint container.

One file holds the backbone config, parameters by name, the noise schedule
table, optional trainer state and free-form metadata. The `ema` slot is
reserved and currently always empty.
"""

from __future__ import annotations

import io
import logging
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import torch

from Engine.errors import ConfigurationError
from Engine.schedule import NoiseSchedule, schedule_from_dict, schedule_to_dict
from Storage.atomic import atomic_write_bytes

from .backbone import BackboneConfig, ExtractionTransformer


logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "tsextract.checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    backbone: BackboneConfig
    params: dict[str, torch.Tensor]
    schedule: NoiseSchedule
    train_state: Optional[dict[str, Any]] = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def build_model(self, device: str | torch.device = "cpu") -> ExtractionTransformer:
        model = ExtractionTransformer(self.backbone)
        model.load_state_dict(self.params)
        return model.to(device)


def save_checkpoint(
    path: str | Path,
    model: ExtractionTransformer,
    schedule: NoiseSchedule,
    train_state: Optional[dict[str, Any]] = None,
    metadata: Optional[dict[str, Any]] = None,
) -> Path:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "backbone": model.config.to_dict(),
        "params": {k: v.detach().cpu() for k, v in model.state_dict().items()},
        "schedule": schedule_to_dict(schedule),
        "train_state": train_state,
        "ema": None,
        "metadata": dict(metadata or {}),
    }
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    path = atomic_write_bytes(path, buffer.getvalue())
    logger.info("saved checkpoint %s", path)
    return path


def load_checkpoint(path: str | Path, map_location: str | torch.device = "cpu") -> Checkpoint:
    try:
        payload = torch.load(Path(path), map_location=map_location, weights_only=True)
    except pickle.UnpicklingError as exc:
        raise ConfigurationError(f"checkpoint {path} holds objects other than tensors and plain containers") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"not a checkpoint file: {path}")
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {version!r}: {path}")
    return Checkpoint(
        backbone=BackboneConfig(**payload["backbone"]),
        params=payload["params"],
        schedule=schedule_from_dict(payload["schedule"]),
        train_state=payload.get("train_state"),
        metadata=payload.get("metadata") or {},
    )
