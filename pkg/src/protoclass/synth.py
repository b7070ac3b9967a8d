"""Deterministic synthetic embedding datasets with a long-tailed class law.

Class means are drawn uniformly on the unit sphere (gaussian direction,
then normalized); each sample is l2_normalize(mean + sigma * gaussian), so
the data lives on the same normalized-embedding geometry the classifiers
assume. Per-class training counts follow the configured law, the LongTail
default of 1 to 4 records per class mirroring the few-shot regime this
engine targets. Everything is a pure function of the seed: draws consume
one PCG64 stream in a fixed order (means, counts, then per-class noise).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .store import EmbeddingStore, Split


@dataclass(frozen=True)
class Uniform:
    """Every class gets exactly ``count`` training records."""

    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("per-class count must be >= 1")

    def draw(self, rng: np.random.Generator, num_classes: int) -> np.ndarray:
        return np.full(num_classes, self.count, dtype=np.int64)


@dataclass(frozen=True)
class LongTail:
    """Training counts drawn uniformly from [low, high] per class."""

    low: int = 1
    high: int = 4

    def __post_init__(self):
        if self.low < 1 or self.high < self.low:
            raise ValueError("need 1 <= low <= high")

    def draw(self, rng: np.random.Generator, num_classes: int) -> np.ndarray:
        return rng.integers(self.low, self.high + 1, size=num_classes)


CountLaw = Union[Uniform, LongTail]


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int
    dimension: int
    law: CountLaw = LongTail()
    sigma: float = 0.0
    val_fraction: float = 0.0
    test_per_class: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.dimension < 2:
            raise ValueError("need dimension >= 2")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.val_fraction < 0:
            raise ValueError("val_fraction must be nonnegative")
        if self.test_per_class < 0:
            raise ValueError("test_per_class must be nonnegative")


def generate(config: SynthConfig) -> EmbeddingStore:
    """Build a store: per-class train records, floor(val_fraction * train)
    extra val records, and ``test_per_class`` extra test queries per class."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    c, d = config.num_classes, config.dimension

    means = rng.standard_normal((c, d))
    means /= np.linalg.norm(means, axis=1, keepdims=True)

    train_counts = config.law.draw(rng, c)
    val_counts = np.floor(config.val_fraction * train_counts).astype(np.int64)
    test_counts = np.full(c, config.test_per_class, dtype=np.int64)
    totals = train_counts + val_counts + test_counts

    n = int(totals.sum())
    record_ids = np.arange(n, dtype=np.uint64)
    label_ids = np.empty(n, dtype=np.uint32)
    splits = np.empty(n, dtype=np.uint8)
    vectors = np.empty((n, d), dtype=np.float32)

    cursor = 0
    for k in range(c):
        count = int(totals[k])
        if config.sigma == 0.0:
            samples = np.broadcast_to(means[k], (count, d))
        else:
            noise = rng.standard_normal((count, d))
            samples = means[k] + config.sigma * noise
            samples = samples / np.linalg.norm(samples, axis=1, keepdims=True)
        block = slice(cursor, cursor + count)
        label_ids[block] = k
        splits[block] = np.repeat(
            [int(Split.TRAIN), int(Split.VAL), int(Split.TEST)],
            [train_counts[k], val_counts[k], test_counts[k]],
        )
        vectors[block] = samples
        cursor += count

    label_map = {k: f"synthetic_species_{k}" for k in range(c)}
    return EmbeddingStore(d, record_ids, label_ids, splits, vectors, label_map)
