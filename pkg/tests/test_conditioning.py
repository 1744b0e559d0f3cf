import numpy as np
import pytest
import torch

from Conditioning.embedder import (
    EmbedderPlugin,
    LogMelEmbedder,
    embed_audio_reference,
    embed_text_reference,
)
from Conditioning.reference import EMBED_DIM, ReferenceEmbedding, null_embedding, unit_normalize
from Conditioning.registry import get_embedder
from Conditioning.text import TEMPLATES, augment_text, strip_template
from Engine.errors import CapabilityError, ConfigurationError, InputError, NumericError, ParameterError, UnknownLabelError
from Model.backbone import ExtractionTransformer
from Synthesis.toy import render_toy_clip


class FixedChoice:
    """Stands in for a numpy Generator whose `integers` always returns one index."""

    def __init__(self, index):
        self.index = index

    def integers(self, high):
        return self.index


class AudioOnly(EmbedderPlugin):
    name = "audio-only"
    can_embed_audio = True

    def embed_audio(self, waveform):
        return np.ones(EMBED_DIM)


def tone(freq, seconds=1.0, rate=24000):
    t = np.arange(int(seconds * rate)) / rate
    return 0.1 * np.sin(2 * np.pi * freq * t)


@pytest.fixture(scope="module")
def fitted_embedder():
    rng = np.random.default_rng(5)
    waveforms, labels = [], []
    for label in ("low_hum", "high_whistle", "rumble_noise"):
        for _ in range(4):
            waveforms.append(render_toy_clip(label, rng, 1.0, 24000))
            labels.append(label)
    return LogMelEmbedder().fit(waveforms, labels)


def test_templates():
    assert [augment_text("dog bark", FixedChoice(i)) for i in range(3)] == [
        "dog bark",
        "An audio clip of dog bark",
        "The sound of dog bark",
    ]
    assert len(TEMPLATES) == 3


def test_strip_template_inverts_every_template():
    for index in range(len(TEMPLATES)):
        assert strip_template(augment_text("rising_chirp", FixedChoice(index))) == "rising_chirp"
    assert strip_template("  low_hum ") == "low_hum"


def test_audio_embedding_is_unit_norm_and_gain_invariant(fitted_embedder):
    y = tone(220.0)
    a = embed_audio_reference(y, fitted_embedder)
    b = embed_audio_reference(3.0 * y, fitted_embedder)
    assert a.provenance == "audio"
    assert a.data.shape == (EMBED_DIM,)
    assert np.linalg.norm(a.data) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(a.data, b.data, atol=1e-8)


def test_audio_embedding_checks_input(fitted_embedder):
    with pytest.raises(InputError):
        embed_audio_reference(tone(220.0, seconds=0.2), fitted_embedder)
    with pytest.raises(InputError):
        embed_audio_reference(tone(220.0), fitted_embedder, sample_rate=16000)
    with pytest.raises(InputError):
        embed_audio_reference(np.zeros((2, 24000)), fitted_embedder)


@pytest.mark.parametrize("fit", [False, True])
def test_silence(fitted_embedder, fit):
    embedder = fitted_embedder if fit else LogMelEmbedder()
    with pytest.raises(InputError, match="silent"):
        embed_audio_reference(np.zeros(24000), embedder)
    quiet = embedder.embed_audio(np.zeros(24000))
    assert np.linalg.norm(quiet) == pytest.approx(1.0)
    np.testing.assert_array_equal(quiet, LogMelEmbedder().embed_audio(np.zeros(12000)))
    assert abs(float(quiet @ embedder.embed_audio(tone(440.0)))) < 0.5


def test_text_embedding_is_template_independent(fitted_embedder):
    plain = embed_text_reference("low_hum", fitted_embedder)
    templated = embed_text_reference("The sound of low_hum", fitted_embedder)
    assert plain.provenance == "text"
    np.testing.assert_array_equal(plain.data, templated.data)
    assert np.linalg.norm(plain.data) == pytest.approx(1.0)


def test_text_centroid_sits_near_its_class(fitted_embedder):
    rng = np.random.default_rng(99)
    clip = embed_audio_reference(render_toy_clip("high_whistle", rng, 1.0, 24000), fitted_embedder)
    scores = {
        label: float(clip.data @ embed_text_reference(label, fitted_embedder).data)
        for label in ("low_hum", "high_whistle", "rumble_noise")
    }
    assert max(scores, key=scores.get) == "high_whistle"


def test_unknown_label(fitted_embedder):
    with pytest.raises(UnknownLabelError):
        embed_text_reference("violin", fitted_embedder)
    with pytest.raises(InputError):
        embed_text_reference("   ", fitted_embedder)


def test_register_class_adds_centroid():
    embedder = LogMelEmbedder()
    embedder.register_class("pulse_beeps", [tone(300.0), tone(310.0)])
    assert "pulse_beeps" in embedder.centroids
    with pytest.raises(ParameterError):
        embedder.register_class("empty", [])


def test_capabilities():
    plugin = AudioOnly()
    assert embed_audio_reference(tone(100.0), plugin).data.shape == (EMBED_DIM,)
    with pytest.raises(CapabilityError):
        embed_text_reference("low_hum", plugin)
    with pytest.raises(CapabilityError):
        EmbedderPlugin().embed_audio(tone(100.0))


def test_reference_embedding_validates_shape():
    with pytest.raises(ParameterError):
        ReferenceEmbedding(data=np.ones(256), provenance="audio")
    with pytest.raises(NumericError):
        ReferenceEmbedding(data=np.full(EMBED_DIM, np.nan), provenance="audio")
    with pytest.raises(NumericError):
        unit_normalize(np.zeros(4))


def test_null_embedding_comes_from_model(tiny_config):
    model = ExtractionTransformer(tiny_config)
    null = null_embedding(model)
    assert null.provenance == "null"
    np.testing.assert_allclose(null.data, model.null_ref.detach().double().numpy())
    assert null.as_tensor(torch.float64).shape == (EMBED_DIM,)


def test_save_and_load_round_trip(fitted_embedder, tmp_path):
    path = fitted_embedder.save(tmp_path / "embedder.npz")
    loaded = get_embedder("logmel", path)
    y = tone(440.0)
    np.testing.assert_allclose(loaded.embed_audio(y), fitted_embedder.embed_audio(y))
    assert sorted(loaded.centroids) == sorted(fitted_embedder.centroids)


def test_registry_resolution(tmp_path):
    assert isinstance(get_embedder("logmel", tmp_path / "missing.npz"), LogMelEmbedder)
    with pytest.raises(ConfigurationError):
        get_embedder("clap")
    with pytest.raises(ConfigurationError):
        get_embedder("no_such_module:Thing")


def test_fit_needs_matching_labels():
    with pytest.raises(ParameterError):
        LogMelEmbedder().fit([tone(100.0)], ["a", "b"])
    with pytest.raises(ParameterError):
        LogMelEmbedder().fit([tone(100.0)], ["a"])
