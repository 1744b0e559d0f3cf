"""Corpus ingestion, SNR-controlled mixture synthesis and dataset manifests."""

from .corpus import IngestConfig, ingest_corpus, load_asset
from .dataset import PlannedItem, SynthConfig, build_dataset, plan_mixtures, reference_waveform, resynthesize
from .manifest import (
    CORPUS_MANIFEST,
    DATASET_MANIFEST,
    AssetEntry,
    BackgroundPlacement,
    CorpusManifest,
    DatasetItem,
    DatasetManifest,
    EventPlacement,
    MixtureSpec,
    read_corpus_manifest,
    read_dataset_manifest,
    write_corpus_manifest,
    write_dataset_manifest,
)
from .mixing import AssetLoader, MixtureComponents, render_components, rms, snr_gain, synthesize_mixture
from .toy import TOY_CLASSES, ToyCorpusConfig, generate_toy_corpus, render_toy_clip
