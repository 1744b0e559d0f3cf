"""Atomic file writes used for manifests, reports, checkpoints and audio."""

from __future__ import annotations

import json
import os
import time
from pathlib import Path
from typing import Any, Iterable


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
	"""Write bytes to `path` via a temporary file and an atomic swap."""

	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	tmp_path = _tmp_name(path)
	with tmp_path.open("wb") as handle:
		handle.write(data)
		handle.flush()
		try:
			os.fsync(handle.fileno())
		except OSError:
			pass
	os.replace(tmp_path, path)
	return path


def atomic_write_text(path: str | Path, text: str) -> Path:
	return atomic_write_bytes(path, text.encode("utf-8"))


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> Path:
	lines = [json.dumps(record, sort_keys=True) for record in records]
	body = "\n".join(lines) + ("\n" if lines else "")
	return atomic_write_text(path, body)


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
	records = []
	with Path(path).open("r", encoding="utf-8") as handle:
		for line_no, line in enumerate(handle, start=1):
			line = line.strip()
			if not line:
				continue
			try:
				records.append(json.loads(line))
			except json.JSONDecodeError as exc:
				raise ValueError(f"{path}:{line_no}: invalid record ({exc.msg})") from exc
	return records


def append_jsonl(path: str | Path, record: dict[str, Any]) -> None:
	"""Append one record; used for logs that grow while a run is in flight."""

	path = Path(path)
	path.parent.mkdir(parents=True, exist_ok=True)
	with path.open("a", encoding="utf-8") as handle:
		handle.write(json.dumps(record, sort_keys=True) + "\n")
		handle.flush()


def _tmp_name(path: Path) -> Path:
	return path.with_name(f"{path.name}.tmp.{os.getpid()}.{time.time_ns()}")
