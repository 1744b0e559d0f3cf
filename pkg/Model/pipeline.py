"""End-to-end extraction: encode the mixture, sample the target latent, decode."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np
import torch

from Codec.plugin import CodecPlugin, decode, encode
from Codec.registry import get_codec
from Conditioning.embedder import EmbedderPlugin, embed_audio_reference, embed_text_reference
from Conditioning.reference import ReferenceEmbedding
from Conditioning.registry import get_embedder
from Engine.sampler import SamplerConfig, sample
from Engine.schedule import NoiseSchedule

from .backbone import ExtractionTransformer
from .checkpoint import load_checkpoint


logger = logging.getLogger(__name__)


class Extractor:
    def __init__(
        self,
        model: ExtractionTransformer,
        schedule: NoiseSchedule,
        codec: CodecPlugin,
        embedder: EmbedderPlugin,
        device: str | torch.device = "cpu",
    ) -> None:
        self.device = torch.device(device)
        self.model = model.to(self.device).eval()
        self.schedule = schedule
        self.codec = codec
        self.embedder = embedder

    @classmethod
    def from_checkpoint(
        cls,
        path: str | Path,
        device: str | torch.device = "cpu",
        codec: Optional[CodecPlugin] = None,
        embedder: Optional[EmbedderPlugin] = None,
    ) -> "Extractor":
        """Rebuild model and plugins; plugin assets come from the checkpoint metadata unless given."""
        checkpoint = load_checkpoint(path)
        plugins: dict[str, Any] = checkpoint.metadata.get("plugins", {})
        if codec is None:
            spec = plugins.get("codec", {})
            codec = get_codec(spec.get("name", "filterbank"), spec.get("asset"))
        if embedder is None:
            spec = plugins.get("embedder", {})
            embedder = get_embedder(spec.get("name", "logmel"), spec.get("asset"))
        return cls(checkpoint.build_model(device), checkpoint.schedule, codec, embedder, device)

    def reference_from_audio(self, waveform: np.ndarray, sample_rate: int) -> ReferenceEmbedding:
        return embed_audio_reference(waveform, self.embedder, sample_rate)

    def reference_from_text(self, text: str) -> ReferenceEmbedding:
        return embed_text_reference(text, self.embedder)

    def extract_latent(
        self,
        mixture: np.ndarray,
        reference: ReferenceEmbedding,
        cfg: SamplerConfig,
        sample_rate: Optional[int] = None,
    ) -> np.ndarray:
        """Sample the target latent (N x C) for a mixture waveform."""
        latent = encode(np.asarray(mixture, dtype=np.float64), self.codec, sample_rate)
        dtype = next(self.model.parameters()).dtype
        x_m = torch.as_tensor(latent, dtype=dtype, device=self.device)
        ref = reference.as_tensor(dtype).to(self.device)
        x0 = sample(self.model, x_m, ref, self.schedule, cfg)
        return x0.detach().cpu().to(torch.float64).numpy()

    def decode(self, latent: np.ndarray, samples: int) -> np.ndarray:
        return decode(latent, self.codec)[:samples]

    def extract(
        self,
        mixture: np.ndarray,
        reference: ReferenceEmbedding,
        cfg: SamplerConfig,
        sample_rate: Optional[int] = None,
    ) -> np.ndarray:
        """Return the extracted waveform, trimmed to the mixture's length."""
        mixture = np.asarray(mixture, dtype=np.float64)
        return self.decode(self.extract_latent(mixture, reference, cfg, sample_rate), mixture.size)
