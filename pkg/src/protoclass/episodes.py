"""Deterministic K-way, S-shot, Q-query episode sampling.

Every episode is an independent pure function of (store, config,
episode_index): the RNG stream is a PCG64 generator keyed by hashing
(seed, episode_index) through numpy's SeedSequence, so episode k can be
re-drawn without replaying episodes 0..k-1 and the full sequence is
reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientClassesError
from .store import EmbeddingStore, Split, class_counts

DEFAULT_SPLITS = frozenset({Split.TRAIN})


@dataclass(frozen=True)
class EpisodeConfig:
    """Sampling parameters: ways K, shots S, queries Q, source splits, seed.

    K=1 episodes are permitted here so that class-marginal statistics can
    be measured; training itself requires K >= 2 (a 1-way episode has a
    constant loss).
    """

    ways: int
    shots: int
    queries: int
    splits: frozenset[Split] = DEFAULT_SPLITS
    seed: int = 0

    def __post_init__(self):
        if self.ways < 1:
            raise ValueError(f"ways must be >= 1, got {self.ways}")
        if self.shots < 1:
            raise ValueError(f"shots must be >= 1, got {self.shots}")
        if self.queries < 1:
            raise ValueError(f"queries must be >= 1, got {self.queries}")
        if not self.splits:
            raise ValueError("source splits must be nonempty")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "splits", frozenset(self.splits))


@dataclass(frozen=True)
class Episode:
    """One sampled episode: K class ids plus K x S support and K x Q query positions."""

    class_ids: tuple[int, ...]
    support: np.ndarray  # (K, S) record positions
    query: np.ndarray  # (K, Q) record positions
    episode_index: int = 0

    @property
    def ways(self) -> int:
        return len(self.class_ids)

    def validate(self, store: EmbeddingStore) -> None:
        """Check this episode against a store; raises ValueError on mismatch."""
        if len(set(self.class_ids)) != len(self.class_ids):
            raise ValueError("episode class_ids are not distinct")
        sup = self.support.ravel()
        qry = self.query.ravel()
        if np.intersect1d(sup, qry).size:
            raise ValueError("support and query positions overlap")
        for slot, label in enumerate(self.class_ids):
            for pos in (*self.support[slot], *self.query[slot]):
                if not 0 <= pos < len(store):
                    raise ValueError(f"position {pos} out of range")
                if int(store.label_ids[pos]) != label:
                    raise ValueError(
                        f"record at position {pos} has label "
                        f"{int(store.label_ids[pos])}, slot expects {label}"
                    )


def eligible_classes(store: EmbeddingStore, config: EpisodeConfig) -> list[int]:
    """Labels with at least S+Q records in the source splits, ascending."""
    needed = config.shots + config.queries
    counts = class_counts(store, config.splits)
    return sorted(label for label, count in counts.items() if count >= needed)


def episode_rng(seed: int, episode_index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, episode_index]))
    )


def sample_episode(
    store: EmbeddingStore, config: EpisodeConfig, episode_index: int
) -> Episode:
    """Draw the episode at ``episode_index`` for the configured seed.

    Classes are drawn uniformly without replacement from the eligible set;
    each class then contributes S+Q records without replacement, the first
    S as support and the remaining Q as queries, so support and query sets
    are disjoint by construction.
    """
    eligible = eligible_classes(store, config)
    if len(eligible) < config.ways:
        raise InsufficientClassesError(config.ways, len(eligible))
    rng = episode_rng(config.seed, episode_index)
    chosen = rng.choice(len(eligible), size=config.ways, replace=False)
    class_ids = tuple(eligible[i] for i in chosen)

    s, q = config.shots, config.queries
    support = np.empty((config.ways, s), dtype=np.intp)
    query = np.empty((config.ways, q), dtype=np.intp)
    for slot, label in enumerate(class_ids):
        pool = store.positions(label, config.splits)
        picked = rng.choice(len(pool), size=s + q, replace=False)
        support[slot] = pool[picked[:s]]
        query[slot] = pool[picked[s:]]
    support.setflags(write=False)
    query.setflags(write=False)
    return Episode(class_ids=class_ids, support=support, query=query,
                   episode_index=episode_index)
