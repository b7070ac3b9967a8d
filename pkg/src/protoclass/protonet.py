"""Prototype math: means, squared-Euclidean distances, the episodic
softmax loss, and its exact analytic gradients.

For an episode with K classes, S support and Q query samples per class,
support embeddings are averaged into prototypes

    c_k = (1/S) * sum_i f(x_i^(k)),

each query is scored by squared Euclidean distance d(q, c_k) = ||q - c_k||^2,
class posteriors are softmax(-d), and the loss is the mean over all K*Q
queries of -log p(true class). Gradients flow through BOTH the query and
the support embeddings, since prototypes are themselves functions of the
head parameters. All math runs in float64 with a fixed summation order,
so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .episodes import Episode
from .heads import ProjectionHead
from .store import EmbeddingStore, l2_normalize


@dataclass(frozen=True)
class Prototype:
    """Per-class mean of embedded support samples."""

    label_id: int
    vector: np.ndarray
    support_count: int


@dataclass(frozen=True)
class LossResult:
    """Episode loss, per-query class posteriors, and head-parameter gradients."""

    loss: float
    probabilities: np.ndarray  # (K, Q, K): posterior over episode classes
    gradients: dict[str, np.ndarray]

    @property
    def episode_accuracy(self) -> float:
        """Fraction of queries whose argmax posterior is their own class."""
        k = self.probabilities.shape[0]
        predicted = self.probabilities.argmax(axis=-1)
        truth = np.arange(k)[:, None]
        return float((predicted == truth).mean())


def compute_prototype(support: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Componentwise mean of the support vectors, accumulated in 64-bit."""
    arr = np.asarray(support, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("support must be a nonempty list of equal-length vectors")
    return arr.mean(axis=0)


def sq_euclidean(x: np.ndarray, c: np.ndarray) -> float:
    """Squared Euclidean distance sum((x_i - c_i)^2)."""
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if x.shape != c.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {c.shape}")
    diff = x - c
    return float(diff @ diff)


def class_posteriors(dists: np.ndarray) -> np.ndarray:
    """softmax(-dists) with max-subtraction, stable for large magnitudes."""
    dists = np.asarray(dists, dtype=np.float64)
    logits = -dists
    logits = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(logits)
    return exp / exp.sum(axis=-1, keepdims=True)


def episode_loss_and_grads(
    head: ProjectionHead,
    episode: Episode,
    store: EmbeddingStore,
    normalize_inputs: bool = True,
) -> LossResult:
    """Loss, posteriors, and exact analytic gradients for one episode.

    With ``normalize_inputs`` the stored embeddings are L2-normalized
    before the head, mirroring the normalized-embedding baselines; head
    outputs are never re-normalized, the loss operates on raw outputs.
    """
    episode.validate(store)
    k, s = episode.support.shape
    q = episode.query.shape[1]

    x_sup = store.vectors[episode.support.ravel()].astype(np.float64)
    x_qry = store.vectors[episode.query.ravel()].astype(np.float64)
    if normalize_inputs:
        x_sup = l2_normalize(x_sup)
        x_qry = l2_normalize(x_qry)

    x_all = np.concatenate([x_sup, x_qry], axis=0)
    z_all, cache = head.forward_cache(x_all)
    p_dim = head.output_dim
    z_sup = z_all[: k * s].reshape(k, s, p_dim)
    z_qry = z_all[k * s :].reshape(k, q, p_dim)

    prototypes = z_sup.mean(axis=1)  # (K, P)

    # d[k, j, m] = ||z_qry[k, j] - prototypes[m]||^2, exact difference form
    diff = z_qry[:, :, None, :] - prototypes[None, None, :, :]  # (K, Q, K, P)
    dists = np.einsum("kjmp,kjmp->kjm", diff, diff)

    probs = class_posteriors(dists)  # (K, Q, K)
    n_queries = k * q
    true_probs = probs[np.arange(k)[:, None], np.arange(q)[None, :], np.arange(k)[:, None]]
    with np.errstate(divide="ignore"):
        loss = float(-np.log(true_probs).sum() / n_queries)

    # dL/dd[k,j,m] = (y - p)/N with y the one-hot true class
    grad_d = -probs / n_queries
    grad_d[np.arange(k)[:, None], np.arange(q)[None, :], np.arange(k)[:, None]] += (
        1.0 / n_queries
    )

    # d = ||q - c_m||^2: dL/dq = sum_m dL/dd * 2(q - c_m),
    #                    dL/dc_m = -sum_{k,j} dL/dd * 2(q - c_m)
    grad_q = 2.0 * (
        grad_d.sum(axis=-1, keepdims=True) * z_qry - np.einsum("kjm,mp->kjp", grad_d, prototypes)
    )
    grad_c = -2.0 * (
        np.einsum("kjm,kjp->mp", grad_d, z_qry)
        - grad_d.sum(axis=(0, 1))[:, None] * prototypes
    )
    grad_z_sup = np.broadcast_to(grad_c[:, None, :] / s, z_sup.shape)

    grad_z_all = np.concatenate(
        [grad_z_sup.reshape(k * s, p_dim), grad_q.reshape(k * q, p_dim)], axis=0
    )
    gradients = head.backward(cache, grad_z_all)
    return LossResult(loss=loss, probabilities=probs, gradients=gradients)
