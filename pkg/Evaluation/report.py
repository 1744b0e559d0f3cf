"""Evaluation reports: an aggregate header line followed by one line per item."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from Engine.errors import InputError, NumericError
from Storage.atomic import atomic_write_text, read_jsonl, write_jsonl


CSV_COLUMNS = ("method", "fd", "kl", "clap_audio", "clap_text", "visqol")


@dataclass
class ItemRecord:
    id: str
    label: str
    cosine_audio: float
    cosine_text: Optional[float] = None
    kl: Optional[float] = None
    visqol: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("cosine_audio", "cosine_text", "kl", "visqol"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                raise NumericError(f"{self.id}: {name} is not finite ({value})")


def _mean(values: list[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


@dataclass
class EvalReport:
    items: list[ItemRecord]
    fd: Optional[float] = None
    skipped: int = 0
    metadata: dict[str, Any] = field(default_factory=dict)

    def aggregates(self) -> dict[str, Any]:
        return {
            "fd": self.fd,
            "mean_kl": _mean([r.kl for r in self.items]),
            "mean_cosine_audio": _mean([r.cosine_audio for r in self.items]),
            "mean_cosine_text": _mean([r.cosine_text for r in self.items]),
            "mean_visqol": _mean([r.visqol for r in self.items]),
            "n_items": len(self.items),
            "n_skipped": self.skipped,
        }


def write_report(report: EvalReport, path: str | Path) -> Path:
    header = {"kind": "aggregate", **report.aggregates(), "metadata": report.metadata}
    lines = [header] + [{"kind": "item", **asdict(record)} for record in report.items]
    return write_jsonl(path, lines)


def read_report(path: str | Path) -> EvalReport:
    records = read_jsonl(path)
    if not records or records[0].get("kind") != "aggregate":
        raise InputError(f"{path}: report does not start with an aggregate record")
    header = records[0]
    items = []
    for record in records[1:]:
        record = {k: v for k, v in record.items() if k != "kind"}
        items.append(ItemRecord(**record))
    return EvalReport(items=items, fd=header.get("fd"), skipped=int(header.get("n_skipped", 0)), metadata=header.get("metadata", {}))


def export_csv(reports: Mapping[str, EvalReport], path: str | Path) -> Path:
    """One row per method with the table columns; visqol stays empty unless imported."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for method, report in reports.items():
        agg = report.aggregates()
        row = [agg["fd"], agg["mean_kl"], agg["mean_cosine_audio"], agg["mean_cosine_text"], agg["mean_visqol"]]
        writer.writerow([method] + ["" if v is None else f"{v:.6f}" for v in row])
    return atomic_write_text(path, buffer.getvalue())


def write_sweep(reports: Mapping[float, EvalReport], path: str | Path) -> Path:
    """One aggregate line per guidance scale, in ascending order."""
    rows = [{"kind": "sweep", "guidance_scale": float(g), **reports[g].aggregates()} for g in sorted(reports)]
    return write_jsonl(path, rows)


def read_sweep(path: str | Path) -> dict[float, dict[str, Any]]:
    rows = read_jsonl(path)
    if not rows or any(row.get("kind") != "sweep" for row in rows):
        raise InputError(f"{path}: not a guidance sweep")
    return {float(row["guidance_scale"]): {k: v for k, v in row.items() if k not in ("kind", "guidance_scale")} for row in rows}
