"""Codec package: waveforms to 50 Hz, 128-channel latents and back."""

from .audio import read_wav, write_wav
from .filterbank import FilterbankCodec
from .plugin import CodecPlugin, decode, encode
from .registry import get_codec

__all__ = ["CodecPlugin", "FilterbankCodec", "decode", "encode", "get_codec", "read_wav", "write_wav"]
