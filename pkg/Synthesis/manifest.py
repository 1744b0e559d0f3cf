"""Corpus and dataset manifests, stored as line-delimited JSON.

Paths inside a manifest file are relative to the directory holding it.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

from Engine.errors import ManifestError, ParameterError
from Storage.atomic import read_jsonl, write_jsonl


CORPUS_MANIFEST = "corpus.jsonl"
DATASET_MANIFEST = "manifest.jsonl"

SNR_RANGE = (-10.0, 10.0)
BACKGROUND_SNR_RANGE = (-5.0, 10.0)


@dataclass(frozen=True)
class AssetEntry:
    asset_id: str
    path: Path
    label: str
    duration: float
    sample_rate: int
    split: str


@dataclass
class CorpusManifest:
    entries: list[AssetEntry]

    def __post_init__(self) -> None:
        self._by_id = {entry.asset_id: entry for entry in self.entries}
        if len(self._by_id) != len(self.entries):
            raise ManifestError("corpus manifest holds duplicate asset ids")

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, asset_id: str) -> AssetEntry:
        try:
            return self._by_id[asset_id]
        except KeyError:
            raise ManifestError(f"asset {asset_id!r} is not in the corpus") from None

    def labels(self) -> list[str]:
        return sorted({entry.label for entry in self.entries})

    def select(self, split: Optional[str] = None, label: Optional[str] = None) -> list[AssetEntry]:
        return [
            entry
            for entry in self.entries
            if (split is None or entry.split == split) and (label is None or entry.label == label)
        ]


@dataclass(frozen=True)
class EventPlacement:
    asset_id: str
    label: str
    onset: float
    snr_db: Optional[float] = None


@dataclass(frozen=True)
class BackgroundPlacement:
    asset_id: str
    snr_db: float


@dataclass(frozen=True)
class MixtureSpec:
    target: EventPlacement
    interferers: tuple[EventPlacement, ...]
    background: Optional[BackgroundPlacement]
    duration: float = 10.0
    seed: int = 0
    sample_rate: int = 24000

    def validate(self) -> None:
        """Check counts, onsets and SNR ranges. +inf SNR mutes a source."""
        if not 1 <= len(self.interferers) <= 3:
            raise ParameterError(f"a mixture needs 1-3 interferers, got {len(self.interferers)}")
        for event in (self.target, *self.interferers):
            if not 0.0 <= event.onset < self.duration:
                raise ParameterError(f"onset {event.onset} of {event.asset_id!r} is outside [0, {self.duration})")
        for event in self.interferers:
            _check_snr(event.snr_db, SNR_RANGE, event.asset_id)
        if self.background is not None:
            _check_snr(self.background.snr_db, BACKGROUND_SNR_RANGE, self.background.asset_id)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "MixtureSpec":
        background = payload.get("background")
        return cls(
            target=EventPlacement(**payload["target"]),
            interferers=tuple(EventPlacement(**item) for item in payload["interferers"]),
            background=BackgroundPlacement(**background) if background else None,
            duration=float(payload["duration"]),
            seed=int(payload["seed"]),
            sample_rate=int(payload["sample_rate"]),
        )


def _check_snr(snr_db: Optional[float], bounds: tuple[float, float], asset_id: str) -> None:
    if snr_db is None:
        raise ParameterError(f"no SNR given for {asset_id!r}")
    if math.isinf(snr_db) and snr_db > 0:
        return
    low, high = bounds
    if not low <= snr_db <= high:
        raise ParameterError(f"SNR {snr_db} dB of {asset_id!r} is outside [{low}, {high}]")


@dataclass
class DatasetItem:
    item_id: str
    split: str
    spec: MixtureSpec
    mixture_path: Path
    target_path: Path
    reference_path: Path
    label: str
    reference_asset_id: str
    reference_fallback: bool = False


@dataclass
class DatasetManifest:
    items: list[DatasetItem]
    root: Path = field(default_factory=Path)

    def __len__(self) -> int:
        return len(self.items)

    def counts(self) -> dict[str, int]:
        return dict(sorted(Counter(item.split for item in self.items).items()))

    def select(self, split: Optional[str] = None, labels: Optional[Iterable[str]] = None) -> "DatasetManifest":
        wanted = None if labels is None else set(labels)
        items = [
            item
            for item in self.items
            if (split is None or item.split == split) and (wanted is None or item.label in wanted)
        ]
        return DatasetManifest(items=items, root=self.root)

    def labels(self) -> list[str]:
        return sorted({item.label for item in self.items})

    def take_per_class(self, k: int) -> "DatasetManifest":
        """First k items of every class, in manifest order."""
        if k < 0:
            raise ParameterError(f"k must be >= 0, got {k}")
        seen: Counter[str] = Counter()
        items = []
        for item in self.items:
            if seen[item.label] < k:
                seen[item.label] += 1
                items.append(item)
        return DatasetManifest(items=items, root=self.root)


def write_corpus_manifest(manifest: CorpusManifest, path: str | Path) -> Path:
    path = Path(path)
    records = []
    for entry in manifest.entries:
        record = asdict(entry)
        record["path"] = _relative(entry.path, path.parent)
        records.append(record)
    return write_jsonl(path, records)


def read_corpus_manifest(path: str | Path) -> CorpusManifest:
    path = Path(path)
    entries = []
    for record in read_jsonl(path):
        record["path"] = path.parent / record["path"]
        entries.append(AssetEntry(**record))
    return CorpusManifest(entries)


def dataset_record(item: DatasetItem, root: Path) -> dict[str, Any]:
    spec = item.spec
    return {
        "id": item.item_id,
        "split": item.split,
        "class": item.label,
        "mixture_path": _relative(item.mixture_path, root),
        "target_path": _relative(item.target_path, root),
        "reference_path": _relative(item.reference_path, root),
        "reference_asset": item.reference_asset_id,
        "reference_fallback": item.reference_fallback,
        "snrs": {
            "interferers": [event.snr_db for event in spec.interferers],
            "background": spec.background.snr_db if spec.background else None,
        },
        "onsets": {
            "target": spec.target.onset,
            "interferers": [event.onset for event in spec.interferers],
        },
        "seed": spec.seed,
        "spec": spec.to_dict(),
    }


def write_dataset_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    path = Path(path)
    return write_jsonl(path, [dataset_record(item, path.parent) for item in manifest.items])


def read_dataset_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    root = path.parent
    items = []
    for record in read_jsonl(path):
        items.append(
            DatasetItem(
                item_id=record["id"],
                split=record["split"],
                spec=MixtureSpec.from_dict(record["spec"]),
                mixture_path=root / record["mixture_path"],
                target_path=root / record["target_path"],
                reference_path=root / record["reference_path"],
                label=record["class"],
                reference_asset_id=record["reference_asset"],
                reference_fallback=bool(record["reference_fallback"]),
            )
        )
    return DatasetManifest(items=items, root=root)


def _relative(path: Path, root: Path) -> str:
    try:
        return Path(path).resolve().relative_to(Path(root).resolve()).as_posix()
    except ValueError:
        return Path(path).resolve().as_posix()
