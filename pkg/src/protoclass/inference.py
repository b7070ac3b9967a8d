"""Prototype banks and ranked top-k prediction.

Two classification routes, matching the embedding-space baselines: the
prototype method scores a query against per-class mean vectors, and the
nearest-neighbor method scans every support image and ranks the first k
distinct labels by their best-ranked image. Search is exhaustive and
exact; at the store sizes this engine targets there is nothing for an
approximate index to save.

Ranking is deterministic: ties in score break by ascending label_id.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ZeroNormError
from .heads import ProjectionHead
from .protonet import Prototype
from .store import EmbeddingStore, Split, l2_normalize


class Metric(enum.Enum):
    COSINE = "cosine"
    NEG_SQ_EUCLIDEAN = "neg_sq_euclidean"


@dataclass(frozen=True)
class PrototypeBank:
    """All class prototypes built from the chosen splits, one per label."""

    dimension: int
    labels: np.ndarray  # (C,) uint32, ascending
    matrix: np.ndarray  # (C, P) float64
    support_counts: np.ndarray  # (C,) int64
    source_splits: frozenset[Split]
    normalized: bool

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def prototypes(self) -> list[Prototype]:
        return [
            Prototype(int(label), self.matrix[i], int(self.support_counts[i]))
            for i, label in enumerate(self.labels)
        ]

    def support_count(self, label_id: int) -> int:
        idx = np.searchsorted(self.labels, label_id)
        if idx < len(self.labels) and self.labels[idx] == label_id:
            return int(self.support_counts[idx])
        return 0


@dataclass(frozen=True)
class Prediction:
    """Ranked distinct labels with nonincreasing scores for one query."""

    record_id: int
    ranked_labels: tuple[int, ...]
    scores: tuple[float, ...]


def build_bank(
    store: EmbeddingStore,
    head: ProjectionHead,
    splits: Iterable[Split],
    normalize_prototypes: bool = False,
    normalize_inputs: bool = True,
) -> PrototypeBank:
    """Average head outputs per class over the chosen splits.

    The mean is taken over raw head outputs; when ``normalize_prototypes``
    is set, L2 normalization is applied after averaging.
    """
    splits = frozenset(splits)
    if not store.split_positions(splits).size:
        raise ValueError(f"no records in splits {sorted(s.name for s in splits)}")
    labels = []
    rows = []
    counts = []
    for label in store.labels:
        pos = store.positions(label, splits)
        if not pos.size:
            continue
        x = store.vectors[pos].astype(np.float64)
        if normalize_inputs:
            x = l2_normalize(x)
        z = head.forward(x)
        proto = z.mean(axis=0)
        if normalize_prototypes:
            proto = l2_normalize(proto)
        labels.append(label)
        rows.append(proto)
        counts.append(len(pos))
    return PrototypeBank(
        dimension=head.output_dim,
        labels=np.array(labels, dtype=np.uint32),
        matrix=np.array(rows, dtype=np.float64),
        support_counts=np.array(counts, dtype=np.int64),
        source_splits=splits,
        normalized=normalize_prototypes,
    )


def _scores_against(matrix: np.ndarray, query: np.ndarray, metric: Metric) -> np.ndarray:
    query = np.asarray(query, dtype=np.float64)
    if metric is Metric.COSINE:
        qn = np.linalg.norm(query)
        if qn == 0.0:
            raise ZeroNormError("cosine similarity is undefined for a zero query")
        row_norms = np.linalg.norm(matrix, axis=1)
        sims = np.full(len(matrix), -np.inf)
        ok = row_norms > 0.0
        sims[ok] = (matrix[ok] @ query) / (row_norms[ok] * qn)
        return sims
    diff = matrix - query
    return -np.einsum("ij,ij->i", diff, diff)


def _rank_topk(
    labels: np.ndarray, scores: np.ndarray, k: int, record_id: int
) -> Prediction:
    if k < 1:
        raise ValueError("k must be positive")
    order = np.lexsort((labels, -scores))[: min(k, len(labels))]
    return Prediction(
        record_id=record_id,
        ranked_labels=tuple(int(labels[i]) for i in order),
        scores=tuple(float(scores[i]) for i in order),
    )


def classify_topk(
    bank: PrototypeBank,
    query: np.ndarray,
    k: int,
    metric: Metric = Metric.COSINE,
    record_id: int = -1,
) -> Prediction:
    """Rank bank classes against a head-space query vector."""
    if not len(bank):
        raise ValueError("prototype bank is empty")
    scores = _scores_against(bank.matrix, query, metric)
    return _rank_topk(bank.labels, scores, k, record_id)


def nn_topk(
    store: EmbeddingStore,
    head: ProjectionHead,
    query: np.ndarray,
    k: int,
    splits: Iterable[Split],
    metric: Metric = Metric.COSINE,
    normalize_inputs: bool = True,
    record_id: int = -1,
) -> Prediction:
    """Scan support images; rank the first k distinct labels by best image."""
    splits = frozenset(splits)
    pos = store.split_positions(splits)
    if not pos.size:
        raise ValueError(f"no records in splits {sorted(s.name for s in splits)}")
    x = store.vectors[pos].astype(np.float64)
    if normalize_inputs:
        x = l2_normalize(x)
    z = head.forward(x)
    scores = _scores_against(z, query, metric)
    labels = store.label_ids[pos]
    uniq, inverse = np.unique(labels, return_inverse=True)
    best = np.full(len(uniq), -np.inf)
    np.maximum.at(best, inverse, scores)
    return _rank_topk(uniq, best, k, record_id)
