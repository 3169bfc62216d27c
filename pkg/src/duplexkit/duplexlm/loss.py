"""Weighted cross-entropy: PAD text positions at half weight, semantic
audio positions at 100x the acoustic ones, total normalized by the weight sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import DuplexkitError
from ..framebuilder import N_AUDIO_STREAMS
from ..tokenizer import PAD_ID
from .model import SEMANTIC_POSITIONS


class LossError(DuplexkitError):
    pass


@dataclass(frozen=True)
class LossWeights:
    pad_scale: float = 0.5
    semantic_weight: float = 100.0
    acoustic_weight: float = 1.0
    text_weight: float = 1.0

    def __post_init__(self):
        for name in ("pad_scale", "semantic_weight", "acoustic_weight", "text_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def audio_position_weights(weights: LossWeights, n_positions: int = N_AUDIO_STREAMS,
                           mask_user_audio: bool = False) -> np.ndarray:
    """Per-token weight for each intra-step audio position (stream order 1..16)."""
    w = np.full(n_positions, weights.acoustic_weight, dtype=np.float64)
    for pos in SEMANTIC_POSITIONS:
        if pos < n_positions:
            w[pos] = weights.semantic_weight
    if mask_user_audio:
        w[n_positions // 2:] = 0.0
    return w


def weighted_loss(text_logits: np.ndarray, text_targets: np.ndarray,
                  audio_logits: np.ndarray, audio_targets: np.ndarray,
                  weights: LossWeights = LossWeights(), pad_id: int = PAD_ID,
                  mask_user_audio: bool = False):
    """Scalar loss, per-component breakdown, and d(loss)/d(logits).

    text_logits: (..., Vt) with targets (...); audio_logits (..., 16, Va)
    with targets (..., 16). Per-position cross-entropies are weighted (PAD
    text positions scaled by pad_scale, audio positions by their codebook's
    semantic/acoustic weight) and the total is the weighted sum divided by
    the weight sum.
    """
    if audio_logits is None:
        audio_logits = np.zeros((0, N_AUDIO_STREAMS, 1))
        audio_targets = np.zeros((0, N_AUDIO_STREAMS), dtype=np.int64)
    text_logits = np.asarray(text_logits, dtype=np.float64)
    audio_logits = np.asarray(audio_logits, dtype=np.float64)
    text_targets = np.asarray(text_targets)
    audio_targets = np.asarray(audio_targets)
    if text_logits.shape[:-1] != text_targets.shape:
        raise LossError("text logits/targets shape mismatch")
    if audio_logits.shape[:-1] != audio_targets.shape:
        raise LossError("audio logits/targets shape mismatch")

    text_logp = _log_softmax(text_logits)
    text_ce = -np.take_along_axis(text_logp, text_targets[..., np.newaxis],
                                  axis=-1)[..., 0]
    text_w = np.where(text_targets == pad_id,
                      weights.text_weight * weights.pad_scale,
                      weights.text_weight)

    audio_logp = _log_softmax(audio_logits)
    audio_ce = -np.take_along_axis(audio_logp, audio_targets[..., np.newaxis],
                                   axis=-1)[..., 0]
    n_pos = audio_targets.shape[-1] if audio_targets.ndim else 0
    pos_w = audio_position_weights(weights, n_pos, mask_user_audio)
    audio_w = np.broadcast_to(pos_w, audio_ce.shape)

    total_weight = float(text_w.sum() + audio_w.sum())
    if total_weight <= 0:
        raise LossError("total loss weight is zero")
    weighted_sum = float((text_ce * text_w).sum() + (audio_ce * audio_w).sum())
    loss = weighted_sum / total_weight

    semantic = [p for p in SEMANTIC_POSITIONS if p < n_pos]
    acoustic = [p for p in range(n_pos) if p not in SEMANTIC_POSITIONS]

    def mean_of(arr):
        return float(arr.mean()) if arr.size else 0.0

    breakdown = {
        "total": loss,
        "weighted_sum": weighted_sum,
        "total_weight": total_weight,
        "text_ce_mean": mean_of(text_ce),
        "audio_ce_mean": mean_of(audio_ce),
        "semantic_ce_mean": mean_of(audio_ce[..., semantic]),
        "acoustic_ce_mean": mean_of(audio_ce[..., acoustic]),
    }

    # d(loss)/d(logit) = w/W * (softmax - onehot)
    dtext = np.exp(text_logp)
    _subtract_onehot(dtext, text_targets)
    dtext *= (text_w / total_weight)[..., np.newaxis]
    daudio = np.exp(audio_logp)
    _subtract_onehot(daudio, audio_targets)
    daudio *= (audio_w / total_weight)[..., np.newaxis]
    return loss, breakdown, dtext, daudio


def _subtract_onehot(probs: np.ndarray, targets: np.ndarray) -> None:
    idx = targets[..., np.newaxis]
    np.put_along_axis(probs, idx, np.take_along_axis(probs, idx, axis=-1) - 1.0, axis=-1)
