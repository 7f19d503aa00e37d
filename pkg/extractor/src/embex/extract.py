"""Extraction jobs: manifest of images -> embedding records, definitions -> class metadata.

Output files are exactly the training toolkit's formats: record JSONL with a
{"meta": {"l", "d"}} header line, and class-metadata JSONL with one
{"class_id", "name", "definition", "embedding"} object per class. Floats are
serialized at full round-trip precision and embeddings are written raw (the
consumer normalizes on load).
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

from PIL import Image

log = logging.getLogger("embex")


class ManifestError(ValueError):
    """A manifest or definitions file is malformed."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ManifestRow:
    id: str
    path: str
    positive: int
    labels: tuple[int, ...] | None


@dataclass(frozen=True)
class ExtractJob:
    manifest_path: str
    backbone: str
    out_path: str
    batch_size: int = 16
    device: str = "cpu"
    n_classes: int | None = None  # inferred from labels when absent


def read_manifest(path: str | os.PathLike) -> list[ManifestRow]:
    rows: list[ManifestRow] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"malformed manifest row: {exc.msg}", line_no) from exc
            try:
                labels = obj.get("labels")
                rows.append(
                    ManifestRow(
                        id=str(obj["id"]),
                        path=str(obj["path"]),
                        positive=int(obj["positive"]),
                        labels=None if labels is None else tuple(int(v) for v in labels),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ManifestError(f"bad manifest row: {exc}", line_no) from exc
            row = rows[-1]
            if row.labels is not None and row.positive not in row.labels:
                raise ManifestError(
                    f"positive {row.positive} not in labels {sorted(row.labels)}", line_no
                )
    return rows


def infer_class_count(rows: list[ManifestRow]) -> int:
    highest = -1
    for row in rows:
        highest = max(highest, row.positive, *(row.labels or ()))
    return highest + 1


def extract_image_embeddings(job: ExtractJob, backbone) -> int:
    """Write one record per readable manifest row; returns the row count written.

    Unreadable images are skipped with a logged reason; the header records the
    backbone's output dimension and the class count.
    """
    rows = read_manifest(job.manifest_path)
    n_classes = job.n_classes if job.n_classes is not None else infer_class_count(rows)
    if rows and n_classes < 1:
        raise ManifestError("class count must be positive")

    written = 0
    tmp = f"{job.out_path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": {"l": max(n_classes, 1), "d": backbone.dim}}) + "\n")
        for start in range(0, len(rows), job.batch_size):
            batch = rows[start : start + job.batch_size]
            images, kept = [], []
            for row in batch:
                try:
                    with Image.open(row.path) as img:
                        images.append(img.convert("RGB"))
                except (OSError, ValueError) as exc:
                    log.warning("skipping %s (%s): %s", row.id, row.path, exc)
                    continue
                kept.append(row)
            if not kept:
                continue
            features = backbone.encode_images(images)
            for row, vector in zip(kept, features):
                record: dict = {
                    "id": row.id,
                    "embedding": [float(v) for v in vector],
                    "positive": row.positive,
                }
                if row.labels is not None:
                    record["labels"] = sorted(row.labels)
                fh.write(json.dumps(record) + "\n")
                written += 1
    os.replace(tmp, job.out_path)
    return written


def read_definitions(path: str | os.PathLike) -> list[dict]:
    entries: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"malformed definitions row: {exc.msg}", line_no) from exc
            if "class_id" not in obj or "name" not in obj:
                raise ManifestError("definitions rows need class_id and name", line_no)
            if not obj.get("definition"):
                raise ManifestError(
                    f"class {obj.get('name', obj['class_id'])!r} has no definition", line_no
                )
            entries.append(
                {
                    "class_id": int(obj["class_id"]),
                    "name": str(obj["name"]),
                    "definition": str(obj["definition"]),
                }
            )
    return entries


def extract_class_embeddings(definitions_path: str, encoder, out_path: str) -> int:
    """Embed "name: definition" sentences; returns the class count written."""
    entries = read_definitions(definitions_path)
    sentences = [f"{e['name']}: {e['definition']}" for e in entries]
    vectors = encoder.encode_text(sentences) if entries else []
    tmp = f"{out_path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for entry, vector in zip(entries, vectors):
            fh.write(
                json.dumps(
                    {
                        "class_id": entry["class_id"],
                        "name": entry["name"],
                        "definition": entry["definition"],
                        "embedding": [float(v) for v in vector],
                    }
                )
                + "\n"
            )
    os.replace(tmp, out_path)
    return len(entries)
