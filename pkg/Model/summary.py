from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .backbone import BackboneConfig, ExtractionTransformer


@dataclass
class ModelSummary:
    total: int
    trainable: int
    by_module: dict[str, int] = field(default_factory=dict)

    def format(self) -> str:
        lines = [f"{name:<14} {count:>14,}" for name, count in self.by_module.items()]
        lines.append(f"{'total':<14} {self.total:>14,}")
        lines.append(f"{'trainable':<14} {self.trainable:>14,}")
        return "\n".join(lines)


def summarize_model(model: nn.Module) -> ModelSummary:
    by_module: dict[str, int] = {}
    for name, param in model.named_parameters():
        top = name.split(".", 1)[0]
        by_module[top] = by_module.get(top, 0) + param.numel()
    return ModelSummary(
        total=sum(p.numel() for p in model.parameters()),
        trainable=sum(p.numel() for p in model.parameters() if p.requires_grad),
        by_module=by_module,
    )


def count_parameters(config: BackboneConfig) -> ModelSummary:
    """Summarize a configuration without allocating its weights."""
    with torch.device("meta"):
        model = ExtractionTransformer(config)
    return summarize_model(model)
