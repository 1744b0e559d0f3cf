"""Torch dataset over a dataset manifest.

Latents are computed through the codec on access and kept in a bounded LRU
cache (`cache_size` items; 0 disables it). Reference
embeddings follow the configured condition: the reference clip (audio), an
augmented class query (text) or a per-item coin flip between both (mixed).
Text queries are redrawn every epoch from (seed, epoch, index).
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from typing import Any

import numpy as np
import torch
from torch.utils.data import Dataset

from Codec.audio import read_wav
from Codec.plugin import CodecPlugin, encode
from Conditioning.embedder import EmbedderPlugin, embed_audio_reference, embed_text_reference
from Conditioning.text import augment_text
from Engine.errors import ConfigurationError, ManifestError
from Synthesis.manifest import DatasetManifest

from .config import CONDITIONS


logger = logging.getLogger(__name__)


class ExtractionDataset(Dataset):
    def __init__(
        self,
        manifest: DatasetManifest,
        codec: CodecPlugin,
        embedder: EmbedderPlugin,
        condition: str = "audio",
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
        cache_size: int = 1024,
    ) -> None:
        if len(manifest) == 0:
            raise ManifestError("dataset manifest is empty")
        if condition not in CONDITIONS:
            raise ConfigurationError(f"condition must be one of {CONDITIONS}, got {condition!r}")
        self.manifest = manifest
        self.codec = codec
        self.embedder = embedder
        self.condition = condition
        self.seed = seed
        self.dtype = dtype
        self.epoch = 0
        self.cache_size = max(int(cache_size), 0)
        self._latents: OrderedDict[int, tuple[torch.Tensor, torch.Tensor]] = OrderedDict()
        self._audio_refs: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.manifest)

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def latents(self, index: int) -> tuple[torch.Tensor, torch.Tensor]:
        cached = self._latents.get(index)
        if cached is not None:
            self._latents.move_to_end(index)
            return cached
        item = self.manifest.items[index]
        for path in (item.mixture_path, item.target_path):
            if not path.exists():
                raise ManifestError(f"{item.item_id}: missing file {path}")
        target, sr = read_wav(item.target_path)
        mixture, _ = read_wav(item.mixture_path)
        x0 = torch.as_tensor(encode(target, self.codec, sr), dtype=self.dtype)
        x_m = torch.as_tensor(encode(mixture, self.codec, sr), dtype=self.dtype)
        if self.cache_size:
            self._latents[index] = (x0, x_m)
            while len(self._latents) > self.cache_size:
                self._latents.popitem(last=False)
        return x0, x_m

    def _audio_reference(self, index: int) -> np.ndarray:
        if index not in self._audio_refs:
            item = self.manifest.items[index]
            waveform, sr = read_wav(item.reference_path)
            self._audio_refs[index] = embed_audio_reference(waveform, self.embedder, sr).data
        return self._audio_refs[index]

    def reference(self, index: int) -> tuple[np.ndarray, str]:
        rng = np.random.default_rng([self.seed, self.epoch, index])
        modality = self.condition
        if modality == "mixed":
            modality = "text" if rng.random() < 0.5 else "audio"
        if modality == "audio":
            return self._audio_reference(index), "audio"
        query = augment_text(self.manifest.items[index].label, rng)
        return embed_text_reference(query, self.embedder).data, "text"

    def __getitem__(self, index: int) -> dict[str, Any]:
        x0, x_m = self.latents(index)
        ref, modality = self.reference(index)
        item = self.manifest.items[index]
        return {
            "x0": x0,
            "x_m": x_m,
            "ref": torch.as_tensor(ref, dtype=self.dtype),
            "label": item.label,
            "id": item.item_id,
            "modality": modality,
        }
