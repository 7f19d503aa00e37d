"""Multi-label metrics: top-K accuracy, per-class AP / macro MAP, label correlations.

All tie-breaking is deterministic: lower class index wins in rankings over
classes, lower sample index wins in rankings over samples. AP is the mean of
precision at the ranks of relevant samples (no interpolation), and MAP is the
unweighted mean of per-class AP over classes that have at least one positive.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

MAP_FLAVOR = "macro"


@dataclass(frozen=True)
class MetricsReport:
    top1: float
    top5: float
    map: float | None
    per_class_ap: list[float | None]
    n_eval: int
    map_reason: str | None = None


@dataclass(frozen=True)
class CorrelationTable:
    """corr[a, b] = P(b annotated | a annotated); rows of unseen classes are dead."""

    matrix: np.ndarray
    annotated: np.ndarray  # per-class annotation counts
    threshold: float

    def filtered_pairs(self) -> list[tuple[int, int, float]]:
        """Off-diagonal entries at or above the threshold, for annotated classes."""
        out = []
        l = self.matrix.shape[0]
        for a in range(l):
            if self.annotated[a] == 0:
                continue
            for b in range(l):
                if a != b and self.matrix[a, b] >= self.threshold:
                    out.append((a, b, float(self.matrix[a, b])))
        return out


def topk_accuracy(scores: np.ndarray, positives: np.ndarray, k: int) -> float:
    """Fraction of samples whose positive is among the k best-scored classes."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=np.int64)
    n, l = scores.shape
    if not 1 <= k <= l:
        raise InvalidInputError(f"k must be in [1, {l}], got {k}")
    # stable argsort of -scores: equal scores keep ascending class order
    top = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    hits = (top == positives[:, None]).any(axis=1)
    return float(hits.mean())


def average_precision(class_scores: np.ndarray, relevance: np.ndarray) -> float:
    """AP for one class: precision averaged at the rank of each relevant sample."""
    ap = _average_precision_or_none(class_scores, relevance)
    if ap is None:
        raise InvalidInputError("average_precision needs at least one relevant sample")
    return ap


def _average_precision_or_none(class_scores: np.ndarray, relevance: np.ndarray) -> float | None:
    class_scores = np.asarray(class_scores, dtype=np.float64)
    relevance = np.asarray(relevance, dtype=np.int64)
    if relevance.sum() == 0:
        return None
    order = np.argsort(-class_scores, kind="stable")  # lower sample index wins ties
    rel_sorted = relevance[order]
    hits = np.cumsum(rel_sorted)
    ranks = np.arange(1, len(order) + 1)
    precision_at = hits / ranks
    # plain left-to-right summation in rank order keeps the value reproducible
    # independent of numpy's pairwise-summation block sizes
    values = precision_at[rel_sorted == 1].tolist()
    return sum(values) / len(values)


def macro_map(
    scores: np.ndarray, labels: list[frozenset[int]]
) -> tuple[float, list[float | None]]:
    """Unweighted mean of per-class AP over classes with at least one positive."""
    scores = np.asarray(scores, dtype=np.float64)
    n, l = scores.shape
    if len(labels) != n:
        raise InvalidInputError(f"{len(labels)} label sets for {n} score rows")
    relevance = np.zeros((n, l), dtype=np.int64)
    for i, ls in enumerate(labels):
        for c in ls:
            relevance[i, c] = 1
    per_class: list[float | None] = [
        _average_precision_or_none(scores[:, c], relevance[:, c]) for c in range(l)
    ]
    present = [ap for ap in per_class if ap is not None]
    if not present:
        raise InvalidInputError("no class has a positive instance; MAP undefined")
    return sum(present) / len(present), per_class


def evaluate_scores(
    scores: np.ndarray,
    positives: np.ndarray,
    labels: list[frozenset[int]] | None,
) -> MetricsReport:
    """Full report; MAP is omitted (with a reason) when full label sets are absent."""
    scores = np.asarray(scores, dtype=np.float64)
    n, l = scores.shape
    top1 = topk_accuracy(scores, positives, 1)
    top5 = topk_accuracy(scores, positives, min(5, l))
    if labels is None:
        return MetricsReport(
            top1=top1,
            top5=top5,
            map=None,
            per_class_ap=[None] * l,
            n_eval=n,
            map_reason="test records carry no full label sets",
        )
    map_value, per_class = macro_map(scores, labels)
    return MetricsReport(top1=top1, top5=top5, map=map_value, per_class_ap=per_class, n_eval=n)


def label_correlation(labels: list[frozenset[int]], l: int, threshold: float = 0.3) -> CorrelationTable:
    """Empirical co-annotation table: corr(a, b) = count(a and b) / count(a)."""
    counts = np.zeros(l, dtype=np.int64)
    co = np.zeros((l, l), dtype=np.int64)
    for ls in labels:
        members = sorted(ls)
        for a in members:
            counts[a] += 1
            for b in members:
                co[a, b] += 1
    matrix = np.zeros((l, l), dtype=np.float64)
    seen = counts > 0
    matrix[seen] = co[seen] / counts[seen, None]
    return CorrelationTable(matrix=matrix, annotated=counts, threshold=threshold)


def write_report(
    report: MetricsReport, path: str | os.PathLike, config_fingerprint: str = ""
) -> None:
    doc: dict = {
        "top1": report.top1,
        "top5": report.top5,
        "map": report.map,
        "per_class_ap": report.per_class_ap,
        "n_eval": report.n_eval,
        "config_fingerprint": config_fingerprint,
        "map_flavor": MAP_FLAVOR,
    }
    if report.map_reason is not None:
        doc["map_reason"] = report.map_reason
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    os.replace(tmp, path)
