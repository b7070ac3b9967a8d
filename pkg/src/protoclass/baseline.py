"""Self-contained prototype-averaging classifier used as a cross-check.

This intentionally does not touch the bank or ranking machinery in
``inference``: class means, cosine similarities, and the ranking are all
recomputed here from first principles (per-class loops, explicit dot
products, a plain sort). The main engine with an identity head must agree
with this path exactly, which is what the `baseline` command and the
equivalence tests exercise.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping

import numpy as np

from .store import EmbeddingStore, Split


def normalized_rows(vectors: np.ndarray) -> list[np.ndarray]:
    rows = []
    for row in np.asarray(vectors, dtype=np.float64):
        norm = math.sqrt(float(np.dot(row, row)))
        if norm == 0.0:
            raise ValueError("zero vector cannot be normalized")
        rows.append(row / norm)
    return rows


def class_means(
    store: EmbeddingStore, splits: Iterable[Split]
) -> dict[int, np.ndarray]:
    """Mean of the L2-normalized embeddings of each class in the splits."""
    splits = set(splits)
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for i in range(len(store)):
        if Split(int(store.splits[i])) not in splits:
            continue
        label = int(store.label_ids[i])
        vec = normalized_rows(store.vectors[i][None, :])[0]
        if label in sums:
            sums[label] = sums[label] + vec
            counts[label] += 1
        else:
            sums[label] = vec
            counts[label] = 1
    return {label: sums[label] / counts[label] for label in sums}


def rank_by_cosine(
    means: Mapping[int, np.ndarray], query: np.ndarray, k: int
) -> list[tuple[int, float]]:
    """Labels sorted by cosine similarity to the query, best first.

    Ties break toward the smaller label id.
    """
    qnorm = math.sqrt(float(np.dot(query, query)))
    if qnorm == 0.0:
        raise ValueError("zero query vector")
    scored = []
    for label, mean in means.items():
        mnorm = math.sqrt(float(np.dot(mean, mean)))
        sim = float(np.dot(mean, query)) / (mnorm * qnorm) if mnorm > 0.0 else -math.inf
        scored.append((label, sim))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def run_baseline(
    store: EmbeddingStore,
    support_splits: Iterable[Split],
    query_split: Split,
    k_list: Iterable[int],
) -> tuple[dict, list[tuple[int, list[tuple[int, float]]]]]:
    """Recall@k of prototype averaging over the query split.

    Returns a report dict {n, recall_at} and per-record rankings.
    """
    k_list = sorted(set(int(k) for k in k_list))
    means = class_means(store, support_splits)
    if not means:
        raise ValueError("no support records in the chosen splits")
    rankings = []
    hits = {k: 0 for k in k_list}
    n = 0
    for i in range(len(store)):
        if int(store.splits[i]) != int(query_split):
            continue
        query = normalized_rows(store.vectors[i][None, :])[0]
        ranked = rank_by_cosine(means, query, max(k_list))
        rankings.append((int(store.record_ids[i]), ranked))
        truth = int(store.label_ids[i])
        labels = [label for label, _ in ranked]
        for k in k_list:
            if truth in labels[:k]:
                hits[k] += 1
        n += 1
    if n == 0:
        raise ValueError(f"query split {query_split.name} is empty")
    report = {"n": n, "recall_at": {k: hits[k] / n for k in k_list}}
    return report, rankings
