"""Recall@k reports over ranked predictions.

Recall@k is the fraction of evaluated samples whose true label appears
among the top k predicted labels. Reports also carry per-class hit
statistics so long-tail behavior stays visible.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .heads import ProjectionHead
from .inference import Metric, Prediction, build_bank, classify_topk, nn_topk
from .store import EmbeddingStore, Split, class_counts, l2_normalize


@dataclass
class ClassStats:
    support_count: int
    hits: dict[int, int]  # k -> number of queries hit within top-k
    total: int


@dataclass
class EvalReport:
    n: int
    recall_at: dict[int, float]
    per_class: dict[int, ClassStats]
    config_digest: str | None = None

    def to_json_dict(self) -> dict:
        doc = {
            "n": self.n,
            "recall_at": {str(k): v for k, v in sorted(self.recall_at.items())},
            "per_class": {
                str(label): {
                    "support_count": stats.support_count,
                    "hits": {str(k): h for k, h in sorted(stats.hits.items())},
                    "total": stats.total,
                }
                for label, stats in sorted(self.per_class.items())
            },
        }
        if self.config_digest is not None:
            doc["config_digest"] = self.config_digest
        return doc

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def recall_at_k(
    predictions: Sequence[Prediction], truth: Mapping[int, int], k: int
) -> float:
    """Fraction of predictions whose true label occurs in the first k ranks."""
    if not predictions:
        raise ValueError("no predictions to evaluate")
    hits = 0
    for pred in predictions:
        if pred.record_id not in truth:
            raise ValueError(f"no truth entry for record {pred.record_id}")
        if truth[pred.record_id] in pred.ranked_labels[:k]:
            hits += 1
    return hits / len(predictions)


def predict(
    store: EmbeddingStore,
    head: ProjectionHead,
    method: str = "proto",
    support_splits: Iterable[Split] = frozenset({Split.TRAIN}),
    query_split: Split = Split.TEST,
    k: int = 5,
    metric: Metric = Metric.COSINE,
    normalize_inputs: bool = True,
    normalize_prototypes: bool = False,
) -> list[Prediction]:
    """Top-k predictions for every record in the query split."""
    if method not in {"proto", "nn"}:
        raise ValueError(f"unknown method {method!r}, expected 'proto' or 'nn'")
    support_splits = frozenset(support_splits)
    query_pos = store.split_positions({query_split})
    if not query_pos.size:
        raise ValueError(f"query split {query_split.name} is empty")

    bank = None
    if method == "proto":
        bank = build_bank(
            store, head, support_splits,
            normalize_prototypes=normalize_prototypes,
            normalize_inputs=normalize_inputs,
        )
    predictions = []
    for pos in query_pos:
        x = store.vectors[pos].astype(np.float64)
        if normalize_inputs:
            x = l2_normalize(x)
        query = head.forward(x)
        rid = int(store.record_ids[pos])
        if method == "proto":
            pred = classify_topk(bank, query, k, metric, record_id=rid)
        else:
            pred = nn_topk(
                store, head, query, k, support_splits, metric,
                normalize_inputs=normalize_inputs, record_id=rid,
            )
        predictions.append(pred)
    return predictions


def evaluate(
    store: EmbeddingStore,
    head: ProjectionHead,
    method: str = "proto",
    support_splits: Iterable[Split] = frozenset({Split.TRAIN}),
    query_split: Split = Split.TEST,
    k_list: Sequence[int] = (5, 10),
    metric: Metric = Metric.COSINE,
    normalize_inputs: bool = True,
    normalize_prototypes: bool = False,
) -> tuple[EvalReport, list[Prediction]]:
    """Recall@k for each requested k plus per-class hit statistics."""
    if not k_list:
        raise ValueError("k_list must be nonempty")
    k_list = sorted(set(int(k) for k in k_list))
    support_splits = frozenset(support_splits)
    predictions = predict(
        store, head, method, support_splits, query_split,
        k=max(k_list), metric=metric,
        normalize_inputs=normalize_inputs,
        normalize_prototypes=normalize_prototypes,
    )
    query_pos = store.split_positions({query_split})
    truth = {
        int(store.record_ids[p]): int(store.label_ids[p]) for p in query_pos
    }
    support_counts = class_counts(store, support_splits)
    per_class: dict[int, ClassStats] = {}
    for pred in predictions:
        label = truth[pred.record_id]
        stats = per_class.setdefault(
            label,
            ClassStats(
                support_count=support_counts.get(label, 0),
                hits={k: 0 for k in k_list},
                total=0,
            ),
        )
        stats.total += 1
        for k in k_list:
            if label in pred.ranked_labels[:k]:
                stats.hits[k] += 1
    n = len(predictions)
    recall = {
        k: sum(stats.hits[k] for stats in per_class.values()) / n for k in k_list
    }
    report = EvalReport(n=n, recall_at=recall, per_class=per_class)
    return report, predictions


def predictions_to_csv(
    predictions: Sequence[Prediction],
    path: str | Path,
    header_comment: str | None = None,
) -> None:
    """Write `record_id,rank,label_id,score` rows, rank starting at 1."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["record_id", "rank", "label_id", "score"])
        for pred in predictions:
            for rank, (label, score) in enumerate(
                zip(pred.ranked_labels, pred.scores), start=1
            ):
                writer.writerow([pred.record_id, rank, label, score])
