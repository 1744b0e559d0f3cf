"""Conditioning package: reference embeddings from audio or text queries."""

from .embedder import (
    EmbedderPlugin,
    LogMelEmbedder,
    embed_audio_reference,
    embed_text_reference,
)
from .reference import EMBED_DIM, ReferenceEmbedding, null_embedding, unit_normalize
from .registry import get_embedder
from .text import TEMPLATES, augment_text, strip_template

__all__ = [
    "EMBED_DIM",
    "EmbedderPlugin",
    "LogMelEmbedder",
    "ReferenceEmbedding",
    "TEMPLATES",
    "augment_text",
    "embed_audio_reference",
    "embed_text_reference",
    "get_embedder",
    "null_embedding",
    "strip_template",
    "unit_normalize",
]
