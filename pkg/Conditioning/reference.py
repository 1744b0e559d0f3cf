from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import torch

from Engine.errors import NumericError, ParameterError


EMBED_DIM = 512

Provenance = Literal["audio", "text", "null"]


@dataclass(frozen=True)
class ReferenceEmbedding:
    data: np.ndarray
    provenance: Provenance

    def __post_init__(self) -> None:
        if self.data.shape != (EMBED_DIM,):
            raise ParameterError(f"reference embeddings are {EMBED_DIM}-d, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise NumericError("reference embedding has non-finite entries")

    def as_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.as_tensor(self.data, dtype=dtype)


def unit_normalize(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(vector))
    if norm == 0.0 or not np.isfinite(norm):
        raise NumericError("cannot normalize a zero or non-finite embedding")
    return vector / norm


def null_embedding(model: torch.nn.Module) -> ReferenceEmbedding:
    """The model's learned unconditional embedding, detached."""
    data = model.null_embedding().detach().cpu().to(torch.float64).numpy().copy()
    return ReferenceEmbedding(data=data, provenance="null")
