from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

from Engine.errors import ConfigurationError
from Settings.plugins import resolve_object

from .embedder import EmbedderPlugin, LogMelEmbedder


logger = logging.getLogger(__name__)


def get_embedder(name: str = "logmel", asset_path: Optional[str | Path] = None) -> EmbedderPlugin:
    """Resolve an embedder by name: `logmel`, or `module:Class` for an external plugin.

    External plugin classes are constructed with the asset path (or None).
    """
    if name == "logmel":
        if asset_path is not None and Path(asset_path).exists():
            return LogMelEmbedder.load(asset_path)
        if asset_path is not None:
            logger.warning("embedder asset %s not found; using an unfitted logmel embedder", asset_path)
        return LogMelEmbedder()
    if ":" not in name:
        raise ConfigurationError(f"unknown embedder {name!r}")
    plugin = resolve_object(name)(asset_path)
    if not isinstance(plugin, EmbedderPlugin):
        for attr in ("embed_audio", "embed_text", "can_embed_audio", "can_embed_text", "sample_rate"):
            if not hasattr(plugin, attr):
                raise ConfigurationError(f"embedder plugin {name!r} lacks {attr!r}")
    return plugin
