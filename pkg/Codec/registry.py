from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

from Engine.errors import ConfigurationError
from Settings.plugins import resolve_object

from .filterbank import FilterbankCodec
from .plugin import CodecPlugin


logger = logging.getLogger(__name__)


def get_codec(name: str = "filterbank", asset_path: Optional[str | Path] = None) -> CodecPlugin:
    """Resolve a codec: `filterbank`, or `module:Class` naming an external VAE wrapper.

    External VAE wrappers are expected to encode with the posterior mean.
    """
    if name == "filterbank":
        if asset_path is not None and Path(asset_path).exists():
            return FilterbankCodec.load(asset_path)
        if asset_path is not None:
            logger.warning("codec asset %s not found; using unit channel scaling", asset_path)
        return FilterbankCodec()
    if ":" not in name:
        raise ConfigurationError(f"unknown codec {name!r}")
    codec = resolve_object(name)(asset_path)
    for attr in ("encode", "decode", "sample_rate", "frame_rate", "channels"):
        if not hasattr(codec, attr):
            raise ConfigurationError(f"codec plugin {name!r} lacks {attr!r}")
    return codec
