"""Class-correlation graph built from class-definition embeddings.

Pipeline: dense cosine similarity between class semantic embeddings,
K-nearest-neighbor sparsification of the off-diagonal, then row-stochastic
smoothing that puts mass ``s`` on the kept neighbors and ``1 - s`` on self.
The resulting graph is the propagation prior for GCN center refinement.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateRowError,
    InvalidInputError,
    ParseError,
    ValidationError,
)

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ClassSemantic:
    """One class of the label vocabulary plus its sentence embedding."""

    class_id: int
    name: str
    definition: str
    embedding: np.ndarray

    def sentence(self) -> str:
        """Sentence the embedding is meant to encode: "name: definition"."""
        return f"{self.name}: {self.definition}"


@dataclass(frozen=True)
class SimilarityMatrix:
    """Dense pairwise cosine similarity between class embeddings."""

    entries: np.ndarray
    l: int


@dataclass(frozen=True)
class CorrelationGraph:
    """Row-stochastic sparsified class-similarity matrix (dense storage)."""

    entries: np.ndarray
    k: int
    s: float
    l: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "l", self.entries.shape[0])

    def validate(self) -> None:
        a = self.entries
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError(f"graph matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("graph contains non-finite entries")
        row_sums = a.sum(axis=1)
        bad = np.nonzero(np.abs(row_sums - 1.0) >= ROW_SUM_TOL)[0]
        if bad.size:
            raise ValidationError(f"row {bad[0]} sums to {row_sums[bad[0]]!r}, expected 1.0")
        diag = np.diag(a)
        if not np.allclose(diag, 1.0 - self.s, atol=ROW_SUM_TOL):
            raise ValidationError(f"diagonal must equal 1 - s = {1.0 - self.s!r}")
        off = a - np.diag(diag)
        if np.any(off < 0):
            raise ValidationError("off-diagonal entries must be nonnegative")
        per_row_nonzeros = (off != 0).sum(axis=1)
        if np.any(per_row_nonzeros > self.k):
            row = int(np.argmax(per_row_nonzeros))
            raise ValidationError(
                f"row {row} has {per_row_nonzeros[row]} off-diagonal nonzeros, limit K={self.k}"
            )


def build_similarity_matrix(semantics: list[ClassSemantic]) -> SimilarityMatrix:
    """Pairwise cosine similarity between class embeddings.

    Raises InvalidInputError on a zero-norm embedding (naming the class) or on
    mismatched embedding dimensions.
    """
    if not semantics:
        raise InvalidInputError("need at least one class")
    dims = {c.embedding.shape for c in semantics}
    if len(dims) != 1 or semantics[0].embedding.ndim != 1:
        raise InvalidInputError(f"embeddings must share one 1-d shape, got {sorted(dims)}")
    emb = np.stack([np.asarray(c.embedding, dtype=np.float64) for c in semantics])
    if not np.all(np.isfinite(emb)):
        bad = [c.class_id for c, row in zip(semantics, emb) if not np.all(np.isfinite(row))]
        raise InvalidInputError(f"non-finite embedding for class_id {bad[0]}")
    norms = np.linalg.norm(emb, axis=1)
    zero = np.nonzero(norms == 0)[0]
    if zero.size:
        raise InvalidInputError(f"zero-norm embedding for class_id {semantics[zero[0]].class_id}")
    unit = emb / norms[:, None]
    a = unit @ unit.T
    # Clip rounding spill and pin the exact identities the invariants promise.
    np.clip(a, -1.0, 1.0, out=a)
    a = (a + a.T) / 2.0
    np.fill_diagonal(a, 1.0)
    return SimilarityMatrix(entries=a, l=len(semantics))


def knn_sparsify(sim: SimilarityMatrix, k: int) -> np.ndarray:
    """Keep each row's K largest off-diagonal similarities, zero the rest.

    Negative similarities are clamped to 0 first so the subsequent smoothing
    normalization stays nonnegative. Ties at the K-th position are broken
    toward the lower class index. The diagonal is carried through unchanged
    (smoothing overwrites it). Result need not be symmetric.
    """
    l = sim.l
    if not 1 <= k <= l - 1:
        raise InvalidInputError(f"K must be in [1, {l - 1}], got {k}")
    a = np.maximum(sim.entries, 0.0)
    out = np.zeros_like(a)
    np.fill_diagonal(out, np.diag(a))
    for i in range(l):
        row = a[i].copy()
        row[i] = -np.inf  # self excluded from the top-K
        # argsort on (-value, index): stable sort keeps lower index first on ties
        order = np.argsort(-row, kind="stable")[:k]
        out[i, order] = a[i, order]
    return out


def smooth(a_bar: np.ndarray, s: float) -> CorrelationGraph:
    """Row-normalize kept neighbors to total mass ``s``; diagonal gets ``1 - s``.

    Raises DegenerateRowError when a row has no positive off-diagonal entry to
    normalize over.
    """
    if not 0.0 < s < 1.0:
        raise InvalidInputError(f"smoothing weight s must be in (0, 1), got {s}")
    a_bar = np.asarray(a_bar, dtype=np.float64)
    l = a_bar.shape[0]
    off = a_bar.copy()
    np.fill_diagonal(off, 0.0)
    denom = off.sum(axis=1)
    dead = np.nonzero(denom <= 0.0)[0]
    if dead.size:
        raise DegenerateRowError(int(dead[0]))
    entries = s * off / denom[:, None]
    np.fill_diagonal(entries, 1.0 - s)
    # infer K from the densest row so the stored bound is tight
    k = int((off != 0).sum(axis=1).max())
    graph = CorrelationGraph(entries=entries, k=k, s=s)
    graph.validate()
    return graph


def build_graph(semantics: list[ClassSemantic], k: int, s: float) -> CorrelationGraph:
    """similarity -> KNN sparsify -> smooth, with the stored K equal to the requested one."""
    a_bar = knn_sparsify(build_similarity_matrix(semantics), k)
    graph = smooth(a_bar, s)
    return CorrelationGraph(entries=graph.entries, k=k, s=s)


def save_graph(graph: CorrelationGraph, path: str | os.PathLike) -> None:
    """Write the graph as JSON; floats serialize with full round-trip precision."""
    doc = {
        "l": graph.l,
        "k": graph.k,
        "s": graph.s,
        "rows": [[float(v) for v in row] for row in graph.entries],
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    os.replace(tmp, path)


def load_graph(path: str | os.PathLike) -> CorrelationGraph:
    """Read a graph file and re-check every invariant."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed graph file {path}: {exc.msg}", line_no=exc.lineno) from exc
    for key in ("l", "k", "s", "rows"):
        if key not in doc:
            raise ValidationError(f"graph file missing key {key!r}")
    entries = np.asarray(doc["rows"], dtype=np.float64)
    if entries.ndim != 2 or entries.shape != (doc["l"], doc["l"]):
        raise ValidationError(f"rows shape {entries.shape} does not match l={doc['l']}")
    graph = CorrelationGraph(entries=entries, k=int(doc["k"]), s=float(doc["s"]))
    graph.validate()
    return graph


def load_class_semantics(path: str | os.PathLike) -> list[ClassSemantic]:
    """Read class metadata JSON Lines: one object per class.

    Checks that class_ids are unique and contiguous from 0 and that all
    embeddings share a dimension.
    """
    semantics: list[ClassSemantic] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed class record: {exc.msg}", line_no=line_no) from exc
            try:
                sem = ClassSemantic(
                    class_id=int(obj["class_id"]),
                    name=str(obj["name"]),
                    definition=str(obj["definition"]),
                    embedding=np.asarray(obj["embedding"], dtype=np.float64),
                )
            except (KeyError, TypeError) as exc:
                raise ValidationError(f"bad class record: {exc}", line_no=line_no) from exc
            if sem.embedding.ndim != 1:
                raise ValidationError("embedding must be a flat list", line_no=line_no)
            semantics.append(sem)
    if not semantics:
        raise ValidationError("class metadata file is empty")
    ids = sorted(c.class_id for c in semantics)
    if ids != list(range(len(semantics))):
        raise ValidationError(f"class_ids must be unique and contiguous from 0, got {ids[:10]}...")
    semantics.sort(key=lambda c: c.class_id)
    dims = {c.embedding.shape[0] for c in semantics}
    if len(dims) != 1:
        raise ValidationError(f"embedding dimensions disagree: {sorted(dims)}")
    return semantics
