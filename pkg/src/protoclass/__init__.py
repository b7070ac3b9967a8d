"""Few-shot classification engine over precomputed image embeddings.

Pipeline: load or synthesize an embedding store, optionally train a
projection head with episodic prototype learning, build per-class
prototype banks, produce ranked top-k predictions (prototype or
nearest-neighbor route), and score them with Recall@k.
"""

from .episodes import Episode, EpisodeConfig, eligible_classes, sample_episode
from .errors import (
    FileFormatError,
    InsufficientClassesError,
    NonFiniteGradientError,
    NonFiniteLossError,
    ProtoclassError,
    ZeroNormError,
)
from .evaluation import EvalReport, evaluate, predict, recall_at_k
from .heads import HeadKind, ProjectionHead, load_head, save_head
from .inference import Metric, Prediction, PrototypeBank, build_bank, classify_topk, nn_topk
from .protonet import (
    LossResult,
    Prototype,
    class_posteriors,
    compute_prototype,
    episode_loss_and_grads,
    sq_euclidean,
)
from .store import (
    EmbeddingRecord,
    EmbeddingStore,
    Split,
    StoreFormat,
    class_counts,
    l2_normalize,
    load_store,
    save_store,
)
from .synth import LongTail, SynthConfig, Uniform, generate
from .training import (
    AdamHyper,
    OptimizerKind,
    OptimizerState,
    SwaState,
    TrainConfig,
    TrainLog,
    adam_step,
    sgd_step,
    swa_accumulate,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamHyper",
    "EmbeddingRecord",
    "EmbeddingStore",
    "Episode",
    "EpisodeConfig",
    "EvalReport",
    "FileFormatError",
    "HeadKind",
    "InsufficientClassesError",
    "LongTail",
    "LossResult",
    "Metric",
    "NonFiniteGradientError",
    "NonFiniteLossError",
    "OptimizerKind",
    "OptimizerState",
    "Prediction",
    "ProjectionHead",
    "ProtoclassError",
    "Prototype",
    "PrototypeBank",
    "Split",
    "StoreFormat",
    "SwaState",
    "SynthConfig",
    "TrainConfig",
    "TrainLog",
    "Uniform",
    "ZeroNormError",
    "adam_step",
    "build_bank",
    "class_counts",
    "class_posteriors",
    "classify_topk",
    "compute_prototype",
    "eligible_classes",
    "episode_loss_and_grads",
    "evaluate",
    "generate",
    "l2_normalize",
    "load_head",
    "load_store",
    "nn_topk",
    "predict",
    "recall_at_k",
    "sample_episode",
    "save_head",
    "save_store",
    "sgd_step",
    "sq_euclidean",
    "swa_accumulate",
    "train",
]
