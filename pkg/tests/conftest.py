"""Shared fixtures and store builders."""

from __future__ import annotations

import numpy as np
import pytest

from protoclass import EmbeddingRecord, EmbeddingStore, Split


def make_store(
    label_counts: dict[int, dict[Split, int]],
    dimension: int = 4,
    rng: np.random.Generator | None = None,
    vectors: dict | None = None,
) -> EmbeddingStore:
    """Store with the given number of records per (label, split).

    Vectors are random unless an explicit (label, split, index) -> vector
    mapping is supplied.
    """
    rng = rng or np.random.default_rng(0)
    records = []
    rid = 0
    for label in sorted(label_counts):
        for split in sorted(label_counts[label]):
            for i in range(label_counts[label][split]):
                if vectors and (label, split, i) in vectors:
                    vec = np.asarray(vectors[(label, split, i)], dtype=np.float32)
                else:
                    vec = rng.standard_normal(dimension).astype(np.float32)
                records.append(EmbeddingRecord(rid, label, split, vec))
                rid += 1
    return EmbeddingStore.from_records(records, dimension=dimension)


def random_store(
    rng: np.random.Generator,
    num_classes: int,
    per_class: int,
    dimension: int,
    split: Split = Split.TRAIN,
) -> EmbeddingStore:
    counts = {label: {split: per_class} for label in range(num_classes)}
    return make_store(counts, dimension=dimension, rng=rng)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2025)
