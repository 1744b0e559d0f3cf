"""Small MLP classifier over log-mel statistics, the desk-scale feature/posterior plugin.

Any object with `features(waveform)` and `posterior(waveform)` can stand in
for it in the evaluation harness.
"""

from __future__ import annotations

import io
import logging
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from Conditioning.embedder import LogMelEmbedder
from Engine.errors import ParameterError
from Storage.atomic import atomic_write_bytes


logger = logging.getLogger(__name__)


class ClassifierPlugin(Protocol):
    labels: list[str]

    def features(self, waveform: np.ndarray) -> np.ndarray: ...

    def posterior(self, waveform: np.ndarray) -> np.ndarray: ...


class ToyClassifier(nn.Module):
    def __init__(self, labels: Sequence[str], hidden: int = 128, sample_rate: int = 24000) -> None:
        super().__init__()
        if len(labels) < 2:
            raise ParameterError("a classifier needs at least two classes")
        self.labels = list(labels)
        self.hidden = hidden
        self.sample_rate = sample_rate
        self.extractor = LogMelEmbedder(sample_rate=sample_rate)
        dim = self.extractor.feature_dim
        self.register_buffer("mean", torch.zeros(dim, dtype=torch.float64))
        self.register_buffer("std", torch.ones(dim, dtype=torch.float64))
        self.body = nn.Sequential(
            nn.Linear(dim, hidden),
            nn.ReLU(),
            nn.Linear(hidden, hidden),
            nn.ReLU(),
        ).double()
        self.head = nn.Linear(hidden, len(self.labels)).double()

    def _inputs(self, waveforms: Sequence[np.ndarray]) -> torch.Tensor:
        raw = torch.as_tensor(np.stack([self.extractor.features(w) for w in waveforms]), dtype=torch.float64)
        return (raw - self.mean) / self.std

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        return self.head(self.body(inputs))

    def fit(
        self, waveforms: Sequence[np.ndarray], labels: Sequence[str], epochs: int = 300, lr: float = 1e-2, seed: int = 0
    ) -> "ToyClassifier":
        unknown = sorted(set(labels) - set(self.labels))
        if unknown:
            raise ParameterError(f"labels outside the classifier's set: {unknown}")
        torch.manual_seed(seed)
        for module in (*self.body, self.head):
            if isinstance(module, nn.Linear):
                module.reset_parameters()
        raw = torch.as_tensor(np.stack([self.extractor.features(w) for w in waveforms]), dtype=torch.float64)
        self.mean.copy_(raw.mean(dim=0))
        self.std.copy_(raw.std(dim=0).clamp_min(1e-8))
        inputs = (raw - self.mean) / self.std
        targets = torch.as_tensor([self.labels.index(label) for label in labels])

        optimizer = torch.optim.Adam(self.parameters(), lr=lr)
        self.train()
        for _ in range(epochs):
            optimizer.zero_grad()
            loss = F.cross_entropy(self(inputs), targets)
            loss.backward()
            optimizer.step()
        self.eval()
        with torch.no_grad():
            accuracy = float((self(inputs).argmax(dim=1) == targets).double().mean())
        logger.info("toy classifier: loss %.4f, train accuracy %.3f", float(loss), accuracy)
        return self

    @torch.no_grad()
    def features(self, waveform: np.ndarray) -> np.ndarray:
        return self.body(self._inputs([waveform]))[0].numpy()

    @torch.no_grad()
    def posterior(self, waveform: np.ndarray) -> np.ndarray:
        return torch.softmax(self(self._inputs([waveform])), dim=-1)[0].numpy()

    def save(self, path: str | Path) -> Path:
        buffer = io.BytesIO()
        torch.save(
            {"labels": self.labels, "hidden": self.hidden, "sample_rate": self.sample_rate, "state": self.state_dict()},
            buffer,
        )
        return atomic_write_bytes(path, buffer.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "ToyClassifier":
        payload = torch.load(Path(path), map_location="cpu", weights_only=True)
        model = cls(payload["labels"], hidden=payload["hidden"], sample_rate=payload["sample_rate"])
        model.load_state_dict(payload["state"])
        model.eval()
        return model
