"""Line-delimited JSON training log kept next to the checkpoints."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

from Storage.atomic import append_jsonl, read_jsonl


TRAINING_LOG = "train_log.jsonl"


class TrainingLog:
    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)

    def step(self, step: int, epoch: int, loss: float, lr: float) -> None:
        append_jsonl(self.path, {"kind": "step", "step": step, "epoch": epoch, "loss": loss, "lr": lr})

    def epoch(self, epoch: int, train_loss: float, valid_loss: Optional[float]) -> None:
        append_jsonl(
            self.path,
            {"kind": "epoch", "epoch": epoch, "train_loss": train_loss, "valid_loss": valid_loss},
        )

    def records(self, kind: Optional[str] = None) -> list[dict[str, Any]]:
        if not self.path.exists():
            return []
        return [r for r in read_jsonl(self.path) if kind is None or r.get("kind") == kind]
