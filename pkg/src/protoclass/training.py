"""Episodic training: optimizer, two-phase learning-rate schedule, and
Stochastic Weight Averaging.

The schedule uses the base learning rate until ``swa_start_episode`` and a
constant SWA learning rate from then on; the post-step parameters of every
episode at or past the switch are folded into a plain running average,
which becomes the final head. Defaults follow the documented recipe:
750 episodes, averaging starting 100 episodes before the end, base rate
1e-5, SWA rate 5e-5.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .episodes import EpisodeConfig, eligible_classes, sample_episode
from .errors import InsufficientClassesError, NonFiniteGradientError, NonFiniteLossError
from .heads import ProjectionHead
from .protonet import episode_loss_and_grads
from .store import EmbeddingStore

Params = dict[str, np.ndarray]


class OptimizerKind(enum.Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass(frozen=True)
class AdamHyper:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    episodes: int
    episode: EpisodeConfig
    base_lr: float = 1e-5
    swa_lr: float = 5e-5
    swa_start_episode: int | None = None  # default: episodes - 100, clamped to 0
    optimizer: OptimizerKind = OptimizerKind.ADAM
    adam: AdamHyper = AdamHyper()
    checkpoint_every: int = 0  # 0 disables periodic checkpoints
    normalize_inputs: bool = True

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be nonnegative")
        if self.base_lr <= 0 or self.swa_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.swa_start_episode is not None and not (
            0 <= self.swa_start_episode <= self.episodes
        ):
            raise ValueError(
                f"swa_start_episode must lie in [0, {self.episodes}], "
                f"got {self.swa_start_episode}"
            )

    @property
    def swa_start(self) -> int:
        if self.swa_start_episode is not None:
            return self.swa_start_episode
        return max(self.episodes - 100, 0)

    def lr_at(self, episode_index: int) -> float:
        return self.base_lr if episode_index < self.swa_start else self.swa_lr


@dataclass
class OptimizerState:
    """Adam moment accumulators (absent for SGD) plus a step counter."""

    step: int = 0
    m: Params | None = None
    v: Params | None = None


@dataclass
class SwaState:
    """Running average of parameters and the number of folded snapshots."""

    average: Params | None = None
    snapshot_count: int = 0


@dataclass(frozen=True)
class TrainLogEntry:
    episode_index: int
    loss: float
    lr: float
    episode_accuracy: float


@dataclass
class TrainLog:
    entries: list[TrainLogEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def losses(self) -> np.ndarray:
        return np.array([e.loss for e in self.entries])

    def to_csv(self, path: str | Path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["episode", "loss", "lr", "episode_accuracy"])
            for e in self.entries:
                writer.writerow([e.episode_index, e.loss, e.lr, e.episode_accuracy])


def _check_finite_grads(grads: Params) -> None:
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(name)


def adam_step(
    state: OptimizerState,
    params: Params,
    grads: Params,
    lr: float,
    hyper: AdamHyper = AdamHyper(),
) -> tuple[Params, OptimizerState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    _check_finite_grads(grads)
    if state.m is None:
        state = OptimizerState(
            step=state.step,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )
    t = state.step + 1
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, p in params.items():
        g = grads[name]
        m = hyper.beta1 * state.m[name] + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * state.v[name] + (1.0 - hyper.beta2) * g * g
        m_hat = m / (1.0 - hyper.beta1**t)
        v_hat = v / (1.0 - hyper.beta2**t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, OptimizerState(step=t, m=new_m, v=new_v)


def sgd_step(
    state: OptimizerState, params: Params, grads: Params, lr: float
) -> tuple[Params, OptimizerState]:
    """Plain gradient descent step."""
    _check_finite_grads(grads)
    new_params = {k: p - lr * grads[k] for k, p in params.items()}
    return new_params, OptimizerState(step=state.step + 1)


def swa_accumulate(state: SwaState, params: Params) -> SwaState:
    """Fold one parameter snapshot into the running mean."""
    n = state.snapshot_count
    if state.average is None:
        average = {k: p.copy() for k, p in params.items()}
    else:
        average = {
            k: avg + (params[k] - avg) / (n + 1) for k, avg in state.average.items()
        }
    return SwaState(average=average, snapshot_count=n + 1)


def train(
    store: EmbeddingStore,
    config: TrainConfig,
    initial_head: ProjectionHead,
    checkpoint_callback: Callable[[int, ProjectionHead], None] | None = None,
) -> tuple[ProjectionHead, TrainLog]:
    """Run the episodic loop; returns the final head and per-episode log.

    The final head is the SWA average when any snapshots were folded,
    otherwise the last optimizer state. Fully determined by the config
    seed; a non-finite loss aborts with the offending episode index.
    """
    if config.episode.ways < 2:
        raise ValueError("training requires at least 2 ways per episode")
    eligible = eligible_classes(store, config.episode)
    if len(eligible) < config.episode.ways:
        raise InsufficientClassesError(config.episode.ways, len(eligible))

    head = initial_head.copy()
    params = head.params
    opt_state = OptimizerState()
    swa_state = SwaState()
    log = TrainLog()

    for ep in range(config.episodes):
        episode = sample_episode(store, config.episode, ep)
        result = episode_loss_and_grads(
            head.with_params(params), episode, store, config.normalize_inputs
        )
        if not np.isfinite(result.loss):
            raise NonFiniteLossError(ep, result.loss)
        lr = config.lr_at(ep)
        if config.optimizer is OptimizerKind.ADAM:
            params, opt_state = adam_step(
                opt_state, params, result.gradients, lr, config.adam
            )
        else:
            params, opt_state = sgd_step(opt_state, params, result.gradients, lr)
        if ep >= config.swa_start:
            swa_state = swa_accumulate(swa_state, params)
        log.entries.append(
            TrainLogEntry(
                episode_index=ep,
                loss=result.loss,
                lr=lr,
                episode_accuracy=result.episode_accuracy,
            )
        )
        if (
            checkpoint_callback is not None
            and config.checkpoint_every > 0
            and (ep + 1) % config.checkpoint_every == 0
        ):
            checkpoint_callback(ep, head.with_params(params))

    final_params = (
        swa_state.average if swa_state.snapshot_count > 0 else params
    )
    final_head = head.with_params(final_params)
    return final_head, log
