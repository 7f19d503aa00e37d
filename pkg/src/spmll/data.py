"""Dataset loading, deterministic batching, and the synthetic ambiguity generator.

The canonical on-disk format is JSON Lines: a mandatory header line
``{"meta": {"l": <classes>, "d": <dim>}}`` followed by one record per line
``{"id": str, "embedding": [...], "positive": int, "labels": [...]?}``.
Embeddings are stored raw and L2-normalized on load (the classifier head is
cosine-based, and normalization makes the adversarial budget comparable
across datasets).
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .corrgraph import ClassSemantic
from .errors import InvalidInputError, ParseError, StateError, ValidationError


@dataclass(frozen=True)
class EmbeddingRecord:
    """One sample: frozen-backbone embedding plus its single observed positive.

    ``labels`` is the optional full ground-truth set, present on evaluation
    splits only.
    """

    id: str
    embedding: np.ndarray
    positive: int
    labels: frozenset[int] | None = None


@dataclass
class Dataset:
    ids: list[str]
    embeddings: np.ndarray  # (n, d_in)
    positives: np.ndarray  # (n,) int
    labels: list[frozenset[int]] | None
    l: int
    split: str = "train"

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def d_in(self) -> int:
        return self.embeddings.shape[1]

    def normalized(self) -> "Dataset":
        """Copy with unit-L2-norm embeddings (what load_jsonl hands out)."""
        norms = np.linalg.norm(self.embeddings, axis=1, keepdims=True)
        if np.any(norms == 0):
            row = int(np.nonzero(norms.ravel() == 0)[0][0])
            raise ValidationError(f"record {self.ids[row]!r} has a zero-norm embedding")
        return Dataset(
            ids=list(self.ids),
            embeddings=self.embeddings / norms,
            positives=self.positives.copy(),
            labels=None if self.labels is None else list(self.labels),
            l=self.l,
            split=self.split,
        )


def load_jsonl(path: str | os.PathLike, expect_labels: bool = False, split: str = "train") -> Dataset:
    """Read and validate a record file; embeddings come back unit-normalized."""
    ids: list[str] = []
    rows: list[np.ndarray] = []
    positives: list[int] = []
    labels: list[frozenset[int] | None] = []
    seen_ids: set[str] = set()
    meta_l: int | None = None
    meta_d: int | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed record: {exc.msg}", line_no=line_no) from exc
            if line_no == 1:
                meta = obj.get("meta")
                if not isinstance(meta, dict) or "l" not in meta or "d" not in meta:
                    raise ValidationError(
                        'first line must be a header {"meta": {"l": ..., "d": ...}}', line_no=1
                    )
                meta_l, meta_d = int(meta["l"]), int(meta["d"])
                if meta_l < 1 or meta_d < 1:
                    raise ValidationError("header l and d must be positive", line_no=1)
                continue
            try:
                rid = str(obj["id"])
                emb = np.asarray(obj["embedding"], dtype=np.float64)
                positive = int(obj["positive"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"bad record: {exc}", line_no=line_no) from exc
            if emb.ndim != 1 or emb.shape[0] != meta_d:
                raise ValidationError(
                    f"embedding has dimension {emb.shape}, header says d={meta_d}", line_no=line_no
                )
            if not np.all(np.isfinite(emb)):
                raise ValidationError("embedding has non-finite entries", line_no=line_no)
            if np.linalg.norm(emb) == 0:
                raise ValidationError("embedding has zero norm", line_no=line_no)
            if not 0 <= positive < meta_l:
                raise ValidationError(
                    f"positive {positive} out of range [0, {meta_l})", line_no=line_no
                )
            label_set: frozenset[int] | None = None
            if "labels" in obj and obj["labels"] is not None:
                label_set = frozenset(int(v) for v in obj["labels"])
                if not label_set:
                    raise ValidationError("labels present but empty", line_no=line_no)
                out_of_range = [v for v in label_set if not 0 <= v < meta_l]
                if out_of_range:
                    raise ValidationError(
                        f"label {out_of_range[0]} out of range [0, {meta_l})", line_no=line_no
                    )
                if positive not in label_set:
                    raise ValidationError(
                        f"positive {positive} not in labels {sorted(label_set)}", line_no=line_no
                    )
            elif expect_labels:
                raise ValidationError("labels required but missing", line_no=line_no)
            if rid in seen_ids:
                warnings.warn(f"duplicate id {rid!r} at line {line_no}; keeping both")
            seen_ids.add(rid)
            ids.append(rid)
            rows.append(emb)
            positives.append(positive)
            labels.append(label_set)
    if meta_l is None:
        raise ValidationError("file is empty; expected a header line")
    if not ids:
        raise ValidationError("file has a header but no records")
    has_labels = [ls is not None for ls in labels]
    if any(has_labels) and not all(has_labels):
        warnings.warn("only some records carry full label sets; ignoring labels")
    dataset = Dataset(
        ids=ids,
        embeddings=np.stack(rows),
        positives=np.asarray(positives, dtype=np.int64),
        labels=list(labels) if all(has_labels) else None,
        l=meta_l,
        split=split,
    )
    return dataset.normalized()


def save_jsonl(dataset: Dataset, path: str | os.PathLike) -> None:
    """Write the canonical format; embeddings go out exactly as stored."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": {"l": dataset.l, "d": dataset.d_in}}) + "\n")
        for i, rid in enumerate(dataset.ids):
            rec: dict = {
                "id": rid,
                "embedding": [float(v) for v in dataset.embeddings[i]],
                "positive": int(dataset.positives[i]),
            }
            if dataset.labels is not None:
                rec["labels"] = sorted(dataset.labels[i])
            fh.write(json.dumps(rec) + "\n")
    os.replace(tmp, path)


@dataclass(frozen=True)
class SynthConfig:
    """Overlapping Gaussian clusters with group-shared anchors.

    Classes inside one group sit close together (offset ``overlap_radius``
    from a shared anchor) so their sample clouds overlap; groups are
    ``cluster_separation`` apart. A sample's full label set is every class
    whose center lies within the membership radius (midpoint of overlap
    radius and separation), always including the generating class.
    """

    n_classes: int
    groups: tuple[tuple[int, ...], ...]
    samples_per_class: int
    cluster_separation: float = 6.0
    overlap_radius: float = 1.0
    noise_scale: float = 0.7
    d_in: int = 16
    seed: int = 0

    def __post_init__(self):
        flat = [c for g in self.groups for c in g]
        if any(len(g) == 0 for g in self.groups):
            raise InvalidInputError("empty overlap group")
        if sorted(flat) != list(range(self.n_classes)):
            raise InvalidInputError(
                f"groups must partition [0, {self.n_classes}), got {sorted(flat)}"
            )
        for name in ("cluster_separation", "overlap_radius", "noise_scale"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.samples_per_class < 1 or self.d_in < 1:
            raise InvalidInputError("samples_per_class and d_in must be positive")
        if self.d_in < len(self.groups):
            raise InvalidInputError("d_in must be at least the number of groups")

    @property
    def membership_radius(self) -> float:
        return 0.5 * (self.overlap_radius + self.cluster_separation)


def synthetic_class_centers(cfg: SynthConfig) -> np.ndarray:
    """True class centers (L x d_in); shared by the generator and the semantics."""
    rng = np.random.default_rng([cfg.seed, 0])
    raw = rng.normal(size=(cfg.d_in, len(cfg.groups)))
    q, _ = np.linalg.qr(raw)
    anchors = q.T * cfg.cluster_separation  # one orthonormal direction per group
    centers = np.zeros((cfg.n_classes, cfg.d_in))
    for g, members in enumerate(cfg.groups):
        for c in members:
            offset = rng.normal(size=cfg.d_in)
            offset *= cfg.overlap_radius / np.linalg.norm(offset)
            centers[c] = anchors[g] + offset
    return centers


def synthetic_class_semantics(cfg: SynthConfig) -> list[ClassSemantic]:
    """Class metadata whose embeddings mirror the generator's group geometry."""
    centers = synthetic_class_centers(cfg)
    group_of = {c: g for g, members in enumerate(cfg.groups) for c in members}
    return [
        ClassSemantic(
            class_id=c,
            name=f"class_{c}",
            definition=f"synthetic class {c} in overlap group {group_of[c]}",
            embedding=centers[c],
        )
        for c in range(cfg.n_classes)
    ]


def gen_synthetic(cfg: SynthConfig) -> tuple[Dataset, Dataset]:
    """Deterministic (train, test) pair; embeddings are raw generator-space vectors.

    Train records carry a single positive drawn uniformly from the full label
    set; test records carry the full set with the generating class as the
    observed positive.
    """
    centers = synthetic_class_centers(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    membership = cfg.membership_radius

    def make_split(split: str) -> Dataset:
        ids, rows, positives, labels = [], [], [], []
        counter = 0
        for c in range(cfg.n_classes):
            for _ in range(cfg.samples_per_class):
                x = centers[c] + cfg.noise_scale * rng.normal(size=cfg.d_in)
                dists = np.linalg.norm(centers - x, axis=1)
                full = {int(j) for j in np.nonzero(dists <= membership)[0]} | {c}
                full_sorted = sorted(full)
                if split == "train":
                    positive = int(full_sorted[rng.integers(len(full_sorted))])
                else:
                    positive = c
                ids.append(f"{split}-{counter:05d}")
                rows.append(x)
                positives.append(positive)
                labels.append(frozenset(full))
                counter += 1
        return Dataset(
            ids=ids,
            embeddings=np.stack(rows),
            positives=np.asarray(positives, dtype=np.int64),
            labels=labels if split == "test" else None,
            l=cfg.n_classes,
            split=split,
        )

    return make_split("train"), make_split("test")


def split_and_batch(dataset: Dataset, batch: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Shuffled index batches; the permutation depends only on (seed, epoch)."""
    if batch < 1:
        raise InvalidInputError(f"batch size must be >= 1, got {batch}")
    rng = np.random.default_rng([seed, 2, epoch])
    order = rng.permutation(len(dataset))
    return [order[i : i + batch] for i in range(0, len(order), batch)]


def dataset_stats(dataset: Dataset) -> dict:
    """Label-count summary mirroring the benchmark's characteristic table."""
    if dataset.labels is None:
        raise StateError("dataset has no full label sets; stats need labels")
    counts = np.asarray([len(ls) for ls in dataset.labels], dtype=np.int64)
    per_class = np.zeros(dataset.l, dtype=np.int64)
    for ls in dataset.labels:
        for c in ls:
            per_class[c] += 1
    return {
        "total_images": int(len(dataset)),
        "total_unique_labels": int((per_class > 0).sum()),
        "total_label_occurrences": int(counts.sum()),
        "average_labels_per_image": float(counts.sum()) / len(dataset),
        "median_labels_per_image": float(np.median(counts)),
        "min_labels_per_image": int(counts.min()),
        "max_labels_per_image": int(counts.max()),
        "per_class_frequency": per_class.tolist(),
    }
