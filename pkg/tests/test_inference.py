"""Prototype banks, top-k ranking, and the nearest-neighbor route,
cross-checked against brute-force oracles."""

from __future__ import annotations

import numpy as np
import pytest

from protoclass import (
    Metric,
    ProjectionHead,
    Split,
    ZeroNormError,
    build_bank,
    classify_topk,
    l2_normalize,
    nn_topk,
)

from conftest import make_store, random_store
from oracles import brute_force_nn_labels, brute_force_rank


class TestBuildBank:
    def test_single_record_prototype_is_embedding(self):
        vec = np.array([1.0, 2.0, 2.0], dtype=np.float32)
        store = make_store(
            {4: {Split.TRAIN: 1}}, dimension=3, vectors={(4, Split.TRAIN, 0): vec}
        )
        bank = build_bank(
            store, ProjectionHead.identity(3), {Split.TRAIN}, normalize_inputs=False
        )
        np.testing.assert_allclose(bank.matrix[0], vec, atol=1e-12)
        assert bank.support_count(4) == 1

    def test_train_and_val_records_averaged(self):
        vectors = {
            (1, Split.TRAIN, 0): [3.0, 0.0],
            (1, Split.TRAIN, 1): [0.0, 3.0],
            (1, Split.VAL, 0): [3.0, 3.0],
        }
        store = make_store(
            {1: {Split.TRAIN: 2, Split.VAL: 1}}, dimension=2, vectors=vectors
        )
        bank = build_bank(
            store,
            ProjectionHead.identity(2),
            {Split.TRAIN, Split.VAL},
            normalize_inputs=False,
        )
        np.testing.assert_allclose(bank.matrix[0], [2.0, 2.0], atol=1e-12)
        assert bank.support_count(1) == 3

    def test_val_only_classes_appear_when_val_included(self, rng):
        store = make_store(
            {1: {Split.TRAIN: 2}, 2: {Split.VAL: 2}, 3: {Split.TRAIN: 1, Split.VAL: 1}},
            rng=rng,
        )
        head = ProjectionHead.identity(4)
        train_only = build_bank(store, head, {Split.TRAIN})
        both = build_bank(store, head, {Split.TRAIN, Split.VAL})
        assert set(train_only.labels.tolist()) == {1, 3}
        assert set(both.labels.tolist()) == {1, 2, 3}

    def test_normalize_prototypes_applied_after_averaging(self):
        vectors = {
            (1, Split.TRAIN, 0): [2.0, 0.0],
            (1, Split.TRAIN, 1): [0.0, 2.0],
        }
        store = make_store({1: {Split.TRAIN: 2}}, dimension=2, vectors=vectors)
        bank = build_bank(
            store,
            ProjectionHead.identity(2),
            {Split.TRAIN},
            normalize_prototypes=True,
            normalize_inputs=False,
        )
        # mean (1,1) then normalized, not mean of normalized vectors
        np.testing.assert_allclose(
            bank.matrix[0], [np.sqrt(0.5), np.sqrt(0.5)], atol=1e-12
        )
        assert bank.normalized

    def test_empty_split_selection_rejected(self, rng):
        store = make_store({1: {Split.TRAIN: 1}}, rng=rng)
        with pytest.raises(ValueError, match="no records"):
            build_bank(store, ProjectionHead.identity(4), {Split.TEST})


class TestClassifyTopK:
    def test_exact_prototype_match_ranks_first(self):
        vectors = {
            (12, Split.TRAIN, 0): [1.0, 0.0, 0.0],
            (3, Split.TRAIN, 0): [0.0, 1.0, 0.0],
            (7, Split.TRAIN, 0): [0.0, 0.0, 1.0],
        }
        store = make_store(
            {12: {Split.TRAIN: 1}, 3: {Split.TRAIN: 1}, 7: {Split.TRAIN: 1}},
            dimension=3,
            vectors=vectors,
        )
        bank = build_bank(store, ProjectionHead.identity(3), {Split.TRAIN})
        pred = classify_topk(bank, np.array([1.0, 0.0, 0.0]), k=3)
        assert pred.ranked_labels[0] == 12
        assert abs(pred.scores[0] - 1.0) < 1e-12

    def test_cosine_scale_invariance(self, rng):
        store = random_store(rng, num_classes=8, per_class=3, dimension=5)
        bank = build_bank(store, ProjectionHead.identity(5), {Split.TRAIN})
        q = rng.standard_normal(5)
        a = classify_topk(bank, q, k=5, metric=Metric.COSINE)
        b = classify_topk(bank, 10.0 * q, k=5, metric=Metric.COSINE)
        assert a.ranked_labels == b.ranked_labels

    @pytest.mark.parametrize("metric", [Metric.COSINE, Metric.NEG_SQ_EUCLIDEAN])
    def test_matches_brute_force_oracle(self, rng, metric):
        store = random_store(rng, num_classes=100, per_class=2, dimension=6)
        bank = build_bank(store, ProjectionHead.identity(6), {Split.TRAIN})
        for _ in range(10):
            q = rng.standard_normal(6)
            pred = classify_topk(bank, q, k=5, metric=metric)
            if metric is Metric.COSINE:
                scores = [
                    float(row @ q) / (np.linalg.norm(row) * np.linalg.norm(q))
                    for row in bank.matrix
                ]
            else:
                scores = [-float(((row - q) ** 2).sum()) for row in bank.matrix]
            expected = brute_force_rank(bank.labels.tolist(), scores, 5)
            assert list(pred.ranked_labels) == expected

    def test_duplicate_prototypes_tie_break_ascending(self):
        vec = [1.0, 1.0]
        vectors = {
            (9, Split.TRAIN, 0): vec,
            (2, Split.TRAIN, 0): vec,
            (5, Split.TRAIN, 0): vec,
        }
        store = make_store(
            {9: {Split.TRAIN: 1}, 2: {Split.TRAIN: 1}, 5: {Split.TRAIN: 1}},
            dimension=2,
            vectors=vectors,
        )
        bank = build_bank(store, ProjectionHead.identity(2), {Split.TRAIN})
        for _ in range(3):
            pred = classify_topk(bank, np.array([1.0, 1.0]), k=3)
            assert list(pred.ranked_labels) == [2, 5, 9]

    def test_scores_nonincreasing_and_k_capped(self, rng):
        store = random_store(rng, num_classes=4, per_class=2, dimension=3)
        bank = build_bank(store, ProjectionHead.identity(3), {Split.TRAIN})
        pred = classify_topk(bank, rng.standard_normal(3), k=10)
        assert len(pred.ranked_labels) == 4
        assert all(
            a >= b for a, b in zip(pred.scores, pred.scores[1:])
        )
        assert len(set(pred.ranked_labels)) == len(pred.ranked_labels)

    def test_zero_query_rejected_under_cosine(self, rng):
        store = random_store(rng, num_classes=3, per_class=2, dimension=3)
        bank = build_bank(store, ProjectionHead.identity(3), {Split.TRAIN})
        with pytest.raises(ZeroNormError):
            classify_topk(bank, np.zeros(3), k=2, metric=Metric.COSINE)


class TestNnTopK:
    def test_query_equal_to_stored_embedding(self, rng):
        store = random_store(rng, num_classes=6, per_class=3, dimension=4)
        head = ProjectionHead.identity(4)
        pos = 7
        query = l2_normalize(store.vectors[pos].astype(np.float64))
        pred = nn_topk(store, head, query, k=3, splits={Split.TRAIN})
        assert pred.ranked_labels[0] == int(store.label_ids[pos])

    def test_shared_label_appears_once(self):
        vectors = {
            (1, Split.TRAIN, 0): [1.0, 0.0],
            (1, Split.TRAIN, 1): [0.9, 0.1],
            (2, Split.TRAIN, 0): [0.0, 1.0],
        }
        store = make_store(
            {1: {Split.TRAIN: 2}, 2: {Split.TRAIN: 1}}, dimension=2, vectors=vectors
        )
        pred = nn_topk(
            store,
            ProjectionHead.identity(2),
            np.array([1.0, 0.05]),
            k=3,
            splits={Split.TRAIN},
        )
        assert list(pred.ranked_labels) == [1, 2]

    @pytest.mark.parametrize("metric", [Metric.COSINE, Metric.NEG_SQ_EUCLIDEAN])
    def test_matches_brute_force_distinct_label_oracle(self, rng, metric):
        store = random_store(rng, num_classes=30, per_class=5, dimension=6)
        head = ProjectionHead.identity(6)
        for _ in range(10):
            q = rng.standard_normal(6)
            pred = nn_topk(
                store, head, q, k=5, splits={Split.TRAIN}, metric=metric,
                normalize_inputs=True,
            )
            z = l2_normalize(store.vectors.astype(np.float64))
            if metric is Metric.COSINE:
                scores = [
                    float(row @ q) / (np.linalg.norm(row) * np.linalg.norm(q))
                    for row in z
                ]
            else:
                scores = [-float(((row - q) ** 2).sum()) for row in z]
            expected = brute_force_nn_labels(store.label_ids.tolist(), scores, 5)
            assert list(pred.ranked_labels) == expected


class TestMetricEquivalence:
    def test_cosine_and_neg_sq_euclidean_agree_on_unit_data(self, rng):
        store = random_store(rng, num_classes=15, per_class=3, dimension=8)
        head = ProjectionHead.identity(8)
        bank = build_bank(
            store, head, {Split.TRAIN}, normalize_prototypes=True,
            normalize_inputs=True,
        )
        for _ in range(20):
            q = l2_normalize(rng.standard_normal(8))
            cos = classify_topk(bank, q, k=15, metric=Metric.COSINE)
            euc = classify_topk(bank, q, k=15, metric=Metric.NEG_SQ_EUCLIDEAN)
            assert cos.ranked_labels == euc.ranked_labels
