"""Toy hierarchical duplex language model with the full training recipe."""

from .loss import LossError, LossWeights, audio_position_weights, weighted_loss
from .model import (
    DuplexModel,
    ModelError,
    SEMANTIC_POSITIONS,
    ToyDuplexConfig,
    depth_forward,
    temporal_forward,
)
from .optim import AdamW
from .training import (
    MetricLog,
    MetricRow,
    TrainingDivergedError,
    TrainingError,
    TrainPreset,
    TrainResult,
    evaluate,
    sample_step,
    select_checkpoint,
    train,
)

__all__ = [
    "AdamW", "DuplexModel", "LossError", "LossWeights", "MetricLog", "MetricRow",
    "ModelError", "SEMANTIC_POSITIONS", "ToyDuplexConfig", "TrainPreset",
    "TrainResult", "TrainingDivergedError", "TrainingError",
    "audio_position_weights", "depth_forward", "evaluate", "sample_step",
    "select_checkpoint", "temporal_forward", "train", "weighted_loss",
]
