import math

import numpy as np
import pytest

from Codec.audio import read_wav, write_wav
from Codec.filterbank import FilterbankCodec
from Codec.plugin import CodecPlugin, decode, encode
from Codec.registry import get_codec
from Engine.errors import ConfigurationError, InputError, ParameterError
from Synthesis.toy import BAND_LIMIT_HZ, render_toy_clip


@pytest.fixture(scope="module")
def codec():
    return FilterbankCodec()


def snr_db(reference, estimate):
    return 10 * np.log10(np.sum(reference**2) / np.sum((reference - estimate) ** 2))


@pytest.mark.parametrize("samples", [1, 479, 480, 481, 24000, 24001, 36000])
def test_frame_count_is_ceil(codec, samples):
    latent = encode(np.full(samples, 0.01), codec)
    assert latent.shape == (math.ceil(samples / 480), 128)


def test_ten_seconds_gives_500_frames(codec):
    assert encode(np.zeros(240000), codec).shape == (500, 128)


def test_in_band_reconstruction(codec):
    rng = np.random.default_rng(0)
    for label in ("low_hum", "harmonic_buzz", "rising_chirp", "pulse_beeps"):
        y = render_toy_clip(label, rng, 2.0, 24000)
        rebuilt = decode(encode(y, codec), codec)[: y.size]
        assert snr_db(y, rebuilt) >= 40.0, label


def test_out_of_band_content_is_dropped(codec):
    t = np.arange(24000) / 24000
    high = 0.1 * np.sin(2 * np.pi * 6000 * t)
    rebuilt = decode(encode(high, codec), codec)[: t.size]
    assert np.sqrt(np.mean(rebuilt**2)) < 0.01 * np.sqrt(np.mean(high**2))
    assert BAND_LIMIT_HZ < 64 * 25


def test_encoder_is_linear(codec):
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(12000), rng.standard_normal(12000)
    np.testing.assert_allclose(encode(2 * a - 0.5 * b, codec), 2 * encode(a, codec) - 0.5 * encode(b, codec), atol=1e-9)


def test_calibration_scales_latents(tmp_path):
    rng = np.random.default_rng(2)
    clips = [render_toy_clip("harmonic_buzz", rng, 1.0, 24000) for _ in range(4)]
    codec = FilterbankCodec()
    scale = codec.calibrate(clips)
    assert scale.shape == (128,)
    latents = np.concatenate([encode(c, codec) for c in clips])
    raw = np.concatenate([encode(c, FilterbankCodec()) for c in clips])
    busy = raw.std(axis=0) > 1e-8
    assert np.allclose(latents.std(axis=0)[busy], 1.0, atol=1e-6)
    # scaling must not change what decodes
    np.testing.assert_allclose(decode(encode(clips[0], codec), codec), decode(encode(clips[0], FilterbankCodec()), FilterbankCodec()), atol=1e-9)

    loaded = get_codec("filterbank", codec.save(tmp_path / "codec.npz"))
    np.testing.assert_array_equal(loaded.scale, codec.scale)


def test_wrong_rate_and_shape(codec):
    with pytest.raises(InputError):
        encode(np.zeros(16000), codec, sample_rate=16000)
    with pytest.raises(InputError):
        encode(np.zeros((2, 100)), codec)
    with pytest.raises(InputError):
        encode(np.zeros(0), codec)
    with pytest.raises(InputError):
        encode(np.array([0.0, np.inf]), codec)


def test_decode_checks_channels(codec):
    with pytest.raises(ParameterError):
        decode(np.zeros((10, 64)), codec)


def test_plugin_must_return_expected_shape():
    class Truncating(CodecPlugin):
        name = "truncating"

        def encode(self, waveform):
            return np.zeros((1, self.channels))

    with pytest.raises(ParameterError):
        encode(np.zeros(2000), Truncating())


def test_registry(tmp_path):
    assert isinstance(get_codec(), FilterbankCodec)
    assert isinstance(get_codec("filterbank", tmp_path / "missing.npz"), FilterbankCodec)
    with pytest.raises(ConfigurationError):
        get_codec("vae")
    with pytest.raises(ConfigurationError):
        get_codec("Codec.filterbank:NoSuchCodec")


def test_wav_round_trip(tmp_path):
    t = np.arange(2400) / 24000
    y = 0.5 * np.sin(2 * np.pi * 440 * t)
    path = write_wav(tmp_path / "tone.wav", y, 24000)
    data, rate = read_wav(path)
    assert rate == 24000
    np.testing.assert_allclose(data, y, atol=1e-4)


def test_unreadable_wav_is_an_input_error(tmp_path):
    with pytest.raises(InputError, match="missing.wav"):
        read_wav(tmp_path / "missing.wav")
    garbage = tmp_path / "garbage.wav"
    garbage.write_bytes(b"not a wav file at all")
    with pytest.raises(InputError):
        read_wav(garbage)
