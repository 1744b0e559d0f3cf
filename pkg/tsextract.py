from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys
from typing import Any, Optional


logger = logging.getLogger("tsextract")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML experiment configuration")
    parser.add_argument("--preset", choices=("base", "toy"), default="base", help="starting preset when the config names none")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="dotted override, repeatable")
    parser.add_argument("--seed", type=int, help="master seed, applied after every other setting")
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsextract", description="Target sound extraction with latent diffusion")
    sub = parser.add_subparsers(dest="cmd", required=True)

    toy = sub.add_parser("toy-corpus", help="Generate the synthetic toy corpus")
    toy.add_argument("--out", required=True, help="Output directory for class folders of WAV clips")
    _common(toy)

    synth = sub.add_parser("synth-data", help="Ingest a corpus and synthesize mixtures")
    source = synth.add_mutually_exclusive_group(required=True)
    source.add_argument("--corpus", help="Directory of audio files, one folder per class")
    source.add_argument("--corpus-manifest", help="Existing corpus.jsonl to mix from")
    synth.add_argument("--class-map", help="YAML/JSON mapping of relative path or stem to class label")
    synth.add_argument("--out", required=True, help="Dataset output directory")
    _common(synth)

    train = sub.add_parser("train", help="Train the extraction model")
    train.add_argument("--data", required=True, help="Dataset directory or manifest.jsonl")
    train.add_argument("--out", help="Run directory for checkpoints and logs")
    train.add_argument("--resume", help="Checkpoint to resume from")
    _common(train)

    finetune = sub.add_parser("finetune", help="Few-shot fine-tuning on new classes")
    finetune.add_argument("--checkpoint", required=True, help="Checkpoint to start from")
    finetune.add_argument("--data", required=True, help="Dataset directory or manifest.jsonl")
    finetune.add_argument("--split", default="holdout", help="Split to draw examples from")
    finetune.add_argument("--shots", type=int, default=10, help="Examples per class")
    finetune.add_argument("--out", help="Run directory for the fine-tuned checkpoints")
    _common(finetune)

    extract = sub.add_parser("extract", help="Extract the target sound from a mixture")
    extract.add_argument("--checkpoint", required=True, help="Trained checkpoint")
    extract.add_argument("--mixture", required=True, help="Mixture WAV")
    ref = extract.add_mutually_exclusive_group(required=True)
    ref.add_argument("--ref-audio", help="Reference WAV of the target class")
    ref.add_argument("--ref-text", help="Text query naming the target class")
    extract.add_argument("--gamma", type=float, help="Guidance scale (default 2.5 for audio, 3.0 for text)")
    extract.add_argument("--steps", type=int, help="Sampling steps (default from config, 50)")
    extract.add_argument("--out", help="Output WAV (default <mixture>_extracted.wav)")
    extract.add_argument("--latent-out", help="Also dump the sampled target latent to this file")
    _common(extract)

    evaluate = sub.add_parser("evaluate", help="Score extraction on a dataset split")
    evaluate.add_argument("--data", required=True, help="Dataset directory or manifest.jsonl")
    evaluate.add_argument("--checkpoint", help="Trained checkpoint (required for --mode model)")
    evaluate.add_argument("--mode", choices=("model", "oracle", "mixture"), default="model")
    evaluate.add_argument("--modality", choices=("audio", "text"), default="audio")
    evaluate.add_argument("--split", default="test")
    evaluate.add_argument(
        "--gamma", type=float, nargs="+",
        help="Guidance scale (default 2.5 for audio, 3.0 for text); several values run a sweep",
    )
    evaluate.add_argument("--skip-shots", type=int, default=0, help="Leave out the first K items per class")
    evaluate.add_argument("--limit", type=int, help="Score at most this many items")
    evaluate.add_argument("--out", required=True, help="Report path (.jsonl)")
    evaluate.add_argument("--csv", help="Also export a one-row CSV table")
    _common(evaluate)

    summary = sub.add_parser("summary", help="Print the model summary and parameter count")
    _common(summary)

    return parser


def _manifest_path(data: str) -> Path:
    from Synthesis.manifest import DATASET_MANIFEST

    path = Path(data)
    return path / DATASET_MANIFEST if path.is_dir() else path


def _load_audio(path: str, sample_rate: int):
    import librosa

    from Codec.audio import read_wav

    waveform, rate = read_wav(path)
    if rate != sample_rate:
        logger.info("resampling %s from %d Hz to %d Hz", path, rate, sample_rate)
        waveform = librosa.resample(waveform, orig_sr=rate, target_sr=sample_rate)
    return waveform


def _write_sidecar(path: Path, record: dict[str, Any]) -> Path:
    from Storage.atomic import atomic_write_text

    return atomic_write_text(path, json.dumps(record, indent=2, sort_keys=True) + "\n")


def _plugins(cfg):
    from Codec.registry import get_codec
    from Conditioning.registry import get_embedder

    codec = get_codec(cfg.plugins.codec, cfg.plugins.codec_asset)
    embedder = get_embedder(cfg.plugins.embedder, cfg.plugins.embedder_asset)
    return codec, embedder


def cmd_toy_corpus(args: argparse.Namespace, cfg) -> int:
    from Synthesis.toy import generate_toy_corpus

    generate_toy_corpus(args.out, cfg.toy, seed=cfg.seed)
    return 0


def cmd_synth_data(args: argparse.Namespace, cfg) -> int:
    import yaml

    from Storage.atomic import atomic_write_text
    from Synthesis.corpus import ingest_corpus
    from Synthesis.dataset import build_dataset
    from Synthesis.manifest import read_corpus_manifest

    out = Path(args.out)
    if args.corpus_manifest:
        corpus = read_corpus_manifest(args.corpus_manifest)
    else:
        class_map = None
        if args.class_map:
            class_map = yaml.safe_load(Path(args.class_map).read_text(encoding="utf-8"))
        corpus = ingest_corpus(args.corpus, out / "corpus", class_map, cfg.ingest)
    build_dataset(cfg.data, corpus, cfg.seed, out)
    atomic_write_text(out / "run.yaml", cfg.to_yaml())
    return 0


def cmd_train(args: argparse.Namespace, cfg) -> int:
    from Codec.audio import read_wav
    from Evaluation.classifier import ToyClassifier
    from Storage.atomic import atomic_write_text
    from Synthesis.manifest import read_dataset_manifest
    from Training.trainer import train

    manifest = read_dataset_manifest(_manifest_path(args.data))
    out = Path(args.out or Path(cfg.workdir) / "train")
    codec, embedder = _plugins(cfg)
    atomic_write_text(out / "run.yaml", cfg.to_yaml())
    result = train(
        cfg.train,
        manifest,
        codec,
        embedder,
        cfg.model,
        cfg.diffusion.build(),
        out,
        device=cfg.resolved_device(),
        resume_from=args.resume,
    )

    train_items = manifest.select("train")
    if len(train_items.labels()) >= 2:
        classifier = ToyClassifier(train_items.labels(), sample_rate=cfg.data.sample_rate)
        classifier.fit(
            [read_wav(item.reference_path)[0] for item in train_items.items],
            [item.label for item in train_items.items],
            seed=cfg.seed,
        )
        classifier.save(out / "classifier.pt")
    logger.info("best checkpoint: %s", result.best_path)
    return 0


def cmd_finetune(args: argparse.Namespace, cfg) -> int:
    from Codec.registry import get_codec
    from Conditioning.registry import get_embedder
    from Model.checkpoint import load_checkpoint
    from Storage.atomic import atomic_write_text
    from Synthesis.manifest import read_dataset_manifest
    from Training.trainer import finetune

    manifest = read_dataset_manifest(_manifest_path(args.data))
    small = manifest.select(args.split).take_per_class(args.shots)
    out = Path(args.out or Path(cfg.workdir) / f"finetune-{args.shots}shot")

    plugins = load_checkpoint(args.checkpoint).metadata.get("plugins", {})
    codec_spec = plugins.get("codec", {})
    embedder_spec = plugins.get("embedder", {})
    codec = get_codec(codec_spec.get("name", cfg.plugins.codec), codec_spec.get("asset", cfg.plugins.codec_asset))
    embedder = get_embedder(
        embedder_spec.get("name", cfg.plugins.embedder), embedder_spec.get("asset", cfg.plugins.embedder_asset)
    )
    atomic_write_text(out / "run.yaml", cfg.to_yaml())
    result = finetune(
        args.checkpoint,
        small,
        codec,
        embedder,
        out,
        cfg_overrides=cfg.finetune.overrides(),
        base_cfg=cfg.train,
        device=cfg.resolved_device(),
    )
    logger.info("fine-tuned checkpoint: %s", result.best_path)
    return 0


def cmd_extract(args: argparse.Namespace, cfg) -> int:
    from dataclasses import replace

    from Codec.audio import write_wav
    from Engine.sampler import default_guidance
    from Model.pipeline import Extractor
    from Storage.latentfile import save_latent

    modality = "text" if args.ref_text is not None else "audio"
    sampler = replace(
        cfg.sampler,
        guidance_scale=default_guidance(modality) if args.gamma is None else args.gamma,
        steps=cfg.sampler.steps if args.steps is None else args.steps,
    )
    extractor = Extractor.from_checkpoint(args.checkpoint, device=cfg.resolved_device())
    rate = extractor.codec.sample_rate
    mixture = _load_audio(args.mixture, rate)
    if modality == "text":
        reference = extractor.reference_from_text(args.ref_text)
    else:
        reference = extractor.reference_from_audio(_load_audio(args.ref_audio, rate), rate)

    latent = extractor.extract_latent(mixture, reference, sampler, rate)
    waveform = extractor.decode(latent, mixture.size)
    out = Path(args.out) if args.out else Path(args.mixture).with_name(f"{Path(args.mixture).stem}_extracted.wav")
    write_wav(out, waveform, rate)
    if args.latent_out:
        save_latent(latent, args.latent_out, frame_rate=extractor.codec.frame_rate)
    _write_sidecar(
        out.with_suffix(".json"),
        {
            "command": "extract",
            "checkpoint": str(Path(args.checkpoint).resolve()),
            "mixture": str(Path(args.mixture).resolve()),
            "ref_audio": str(Path(args.ref_audio).resolve()) if args.ref_audio else None,
            "ref_text": args.ref_text,
            "modality": modality,
            "gamma": sampler.guidance_scale,
            "steps": sampler.steps,
            "seed": sampler.seed,
            "sample_rate": rate,
            "output": str(out.resolve()),
            "latent": str(Path(args.latent_out).resolve()) if args.latent_out else None,
        },
    )
    logger.info("wrote %s (gamma=%.2f, steps=%d)", out, sampler.guidance_scale, sampler.steps)
    return 0


def cmd_evaluate(args: argparse.Namespace, cfg) -> int:
    from dataclasses import replace

    from Codec.audio import read_wav
    from Conditioning.embedder import LogMelEmbedder
    from Engine.errors import ConfigurationError
    from Engine.sampler import default_guidance
    from Evaluation.classifier import ToyClassifier
    from Evaluation.harness import evaluate, guidance_sweep
    from Evaluation.report import export_csv, write_report, write_sweep
    from Model.pipeline import Extractor
    from Synthesis.manifest import DatasetManifest, read_dataset_manifest

    full = read_dataset_manifest(_manifest_path(args.data))
    manifest = full.select(args.split)
    if args.skip_shots:
        used = {item.item_id for item in manifest.take_per_class(args.skip_shots).items}
        manifest = DatasetManifest([item for item in manifest.items if item.item_id not in used], manifest.root)
    if args.limit is not None:
        manifest = DatasetManifest(manifest.items[: args.limit], manifest.root)

    extractor = None
    if args.checkpoint:
        extractor = Extractor.from_checkpoint(args.checkpoint, device=cfg.resolved_device())
        embedder = extractor.embedder
    elif args.mode == "model":
        raise ConfigurationError("--mode model needs --checkpoint")
    else:
        _, embedder = _plugins(cfg)
    if isinstance(embedder, LogMelEmbedder) and not embedder.centroids:
        train = full.select("train")
        embedder.fit([read_wav(item.reference_path)[0] for item in train.items], [item.label for item in train.items])

    classifier = None
    asset = cfg.plugins.classifier_asset
    if asset is None and args.checkpoint:
        asset = str(Path(args.checkpoint).parent / "classifier.pt")
    if asset is not None and Path(asset).exists():
        classifier = ToyClassifier.load(asset)
    else:
        logger.warning("no classifier available; FD and KL are not computed")

    gammas = args.gamma or [default_guidance(args.modality)]
    metadata = {"checkpoint": args.checkpoint, "split": args.split}
    if len(gammas) > 1:
        if args.mode != "model":
            raise ConfigurationError("a guidance sweep needs --mode model")
        reports = guidance_sweep(
            manifest, embedder, cfg.sampler, gammas, extractor,
            classifier=classifier, modality=args.modality, metadata=metadata,
        )
        out = Path(args.out)
        for gamma, report in reports.items():
            write_report(report, out.with_name(f"{out.stem}.gamma{gamma:g}{out.suffix}"))
        write_sweep(reports, out)
        if args.csv:
            export_csv({f"gamma={gamma:g}": report for gamma, report in reports.items()}, args.csv)
        print(json.dumps({f"{gamma:g}": report.aggregates() for gamma, report in reports.items()}, indent=2))
        return 0

    sampler = replace(cfg.sampler, guidance_scale=gammas[0])
    report = evaluate(
        manifest,
        embedder,
        sampler,
        extractor=extractor,
        classifier=classifier,
        mode=args.mode,
        modality=args.modality,
        metadata=metadata,
    )
    write_report(report, args.out)
    if args.csv:
        export_csv({args.mode: report}, args.csv)
    print(json.dumps(report.aggregates(), indent=2, sort_keys=True))
    return 0


def cmd_summary(args: argparse.Namespace, cfg) -> int:
    from Model.summary import count_parameters

    summary = count_parameters(cfg.model)
    print(f"depth={cfg.model.depth} width={cfg.model.width} heads={cfg.model.heads} skip={cfg.model.use_skip}")
    print(summary.format())
    return 0


COMMANDS = {
    "toy-corpus": cmd_toy_corpus,
    "synth-data": cmd_synth_data,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "extract": cmd_extract,
    "evaluate": cmd_evaluate,
    "summary": cmd_summary,
}


def main(argv: Optional[list[str]] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT, force=True)

    import yaml

    from Engine.errors import TSEError
    from Settings.config import load_config

    try:
        cfg = load_config(args.config, args.overrides, args.seed, base=args.preset)
        logger.info("%s: resolved configuration\n%s", args.cmd, cfg.to_yaml())
        return COMMANDS[args.cmd](args, cfg)
    except (TSEError, OSError, yaml.YAMLError) as exc:
        logger.error("%s failed: %s", args.cmd, exc)
        return 1


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
