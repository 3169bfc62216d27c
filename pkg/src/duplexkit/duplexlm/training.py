"""Training presets, the metric log, the train loop, sampling, and
validation-based checkpoint selection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from ..core import DuplexkitError, substream_rng
from ..framebuilder import FrameChunk, N_AUDIO_STREAMS
from ..tokenizer import PAD_ID
from .loss import LossWeights, weighted_loss
from .model import DuplexModel, ToyDuplexConfig, _softmax
from .optim import AdamW


class TrainingError(DuplexkitError):
    pass


class TrainingDivergedError(TrainingError):
    pass


@dataclass(frozen=True)
class TrainPreset:
    """Optimizer constants for a training stage. ``finetune()`` splits the
    learning rate, running the depth transformer at exactly twice the
    temporal rate, with a 50-step linear warmup."""

    name: str
    lr_temporal: float
    lr_depth: float
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-5
    weight_decay: float = 0.1
    warmup_steps: int = 0
    eval_interval: int = 802

    def __post_init__(self):
        if self.lr_temporal <= 0 or self.lr_depth <= 0:
            raise ValueError("learning rates must be positive")

    @classmethod
    def pretrain(cls, lr: float = 3e-5, eval_interval: int = 100) -> "TrainPreset":
        return cls(name="pretrain", lr_temporal=lr, lr_depth=lr,
                   eval_interval=eval_interval)

    @classmethod
    def finetune(cls, lr_temporal: float = 2e-6) -> "TrainPreset":
        return cls(name="finetune", lr_temporal=lr_temporal,
                   lr_depth=2.0 * lr_temporal, warmup_steps=50, eval_interval=802)


@dataclass(frozen=True)
class MetricRow:
    step: int
    train_loss: float
    text_val_loss: float | None = None
    audio_val_loss: float | None = None
    text_accuracy_nonpad: float | None = None
    audio_accuracy: float | None = None


@dataclass
class MetricLog:
    rows: list[MetricRow] = field(default_factory=list)

    def append(self, row: MetricRow) -> None:
        if self.rows and row.step <= self.rows[-1].step:
            raise TrainingError(
                f"metric steps must increase: {row.step} after {self.rows[-1].step}")
        self.rows.append(row)

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(asdict(row)) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MetricLog":
        log = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    log.append(MetricRow(**json.loads(line)))
        return log


def select_checkpoint(log: MetricLog) -> tuple[int, float]:
    """Step with the minimum total (text + audio) validation loss.

    Ties break toward the earliest step; rows missing either validation
    loss are an error.
    """
    if not log.rows:
        raise TrainingError("empty metric log")
    best_step, best_total = None, None
    for row in log.rows:
        if row.text_val_loss is None or row.audio_val_loss is None:
            raise TrainingError(f"row at step {row.step} missing validation losses")
        total = row.text_val_loss + row.audio_val_loss
        if best_total is None or total < best_total:
            best_step, best_total = row.step, total
    return best_step, best_total


def _chunk_tokens(chunk) -> np.ndarray:
    return chunk.tokens if isinstance(chunk, FrameChunk) else np.asarray(chunk)


def _sample_batch(chunks, window: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    grids = []
    for _ in range(batch_size):
        tokens = _chunk_tokens(chunks[rng.integers(len(chunks))])
        steps = tokens.shape[1]
        if steps < window:
            raise TrainingError(f"chunk of {steps} steps shorter than window {window}")
        start = int(rng.integers(steps - window + 1))
        grids.append(tokens[:, start:start + window])
    return np.stack(grids)


def evaluate(model: DuplexModel, chunks, *, weights: LossWeights = LossWeights(),
             mask_user_audio: bool = False, max_chunks: int = 8) -> dict[str, float]:
    """Unweighted validation losses and argmax accuracies on a fixed batch."""
    window = min(model.config.context_steps,
                 min(_chunk_tokens(c).shape[1] for c in chunks))
    batch = np.stack([_chunk_tokens(c)[:, :window] for c in chunks[:max_chunks]])
    text_logits, audio_logits, _ = model.forward(batch)
    targets = batch[:, :, 1:]
    text_t = targets[:, 0]
    audio_t = targets[:, 1:].transpose(0, 2, 1)

    _, breakdown, _, _ = weighted_loss(text_logits, text_t, audio_logits, audio_t,
                                       weights, mask_user_audio=mask_user_audio)
    text_pred = text_logits.argmax(axis=-1)
    nonpad = text_t != PAD_ID
    text_acc = float((text_pred == text_t)[nonpad].mean()) if nonpad.any() else float("nan")
    audio_pred = audio_logits.argmax(axis=-1)
    if mask_user_audio:
        audio_pred = audio_pred[:, :, :N_AUDIO_STREAMS // 2]
        audio_t = audio_t[:, :, :N_AUDIO_STREAMS // 2]
    audio_acc = float((audio_pred == audio_t).mean())
    return {
        "text_val_loss": breakdown["text_ce_mean"],
        "audio_val_loss": breakdown["audio_ce_mean"],
        "text_accuracy_nonpad": text_acc,
        "audio_accuracy": audio_acc,
    }


@dataclass
class TrainResult:
    model: DuplexModel
    log: MetricLog
    optimizer: AdamW


def train(chunks, config: ToyDuplexConfig, preset: TrainPreset, *,
          n_steps: int = 200, batch_size: int = 8, seed: int = 0,
          weights: LossWeights = LossWeights(), val_chunks=None,
          mask_user_audio: bool = False, record_updates: bool = False,
          verbose: bool = False) -> TrainResult:
    """AdamW training with the preset's constants and per-group rates.

    Deterministic given (seed, data order): init and batch sampling run on
    named substreams. Divergence (non-finite loss) aborts with the step in
    the message.
    """
    if not chunks:
        raise TrainingError("no training chunks")
    model = DuplexModel(config, seed=seed)
    lrs = {"temporal": preset.lr_temporal, "depth": preset.lr_depth}
    opt = AdamW(model.params, lambda name: lrs[model.param_group(name)],
                beta1=preset.beta1, beta2=preset.beta2, eps=preset.eps,
                weight_decay=preset.weight_decay, warmup_steps=preset.warmup_steps,
                record_updates=record_updates)
    rng = substream_rng(seed, "train.batches")
    window = min(config.context_steps + 1,
                 min(_chunk_tokens(c).shape[1] for c in chunks))
    log = MetricLog()
    val = val_chunks if val_chunks else chunks

    for step in range(1, n_steps + 1):
        batch = _sample_batch(chunks, window, batch_size, rng)
        text_logits, audio_logits, cache = model.forward(batch)
        targets = batch[:, :, 1:]
        loss, _, dtext, daudio = weighted_loss(
            text_logits, targets[:, 0], audio_logits,
            targets[:, 1:].transpose(0, 2, 1), weights,
            mask_user_audio=mask_user_audio)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"loss {loss} at step {step}")
        grads = model.backward(dtext, daudio, cache)
        opt.step(grads)
        if step % preset.eval_interval == 0 or step == n_steps:
            metrics = evaluate(model, val, weights=weights,
                               mask_user_audio=mask_user_audio)
            log.append(MetricRow(step=step, train_loss=float(loss), **metrics))
            if verbose:
                print(f"step {step:>6}  train {loss:.4f}  "
                      f"text_val {metrics['text_val_loss']:.4f}  "
                      f"audio_val {metrics['audio_val_loss']:.4f}  "
                      f"text_acc {metrics['text_accuracy_nonpad']:.3f}  "
                      f"audio_acc {metrics['audio_accuracy']:.3f}")
    return TrainResult(model=model, log=log, optimizer=opt)


def sample_step(model: DuplexModel, prefix: np.ndarray, temperature: float,
                rng: np.random.Generator) -> tuple[int, list[int]]:
    """Sample the next step's text token and 16 audio tokens.

    temperature 0 means argmax everywhere; otherwise tokens draw from
    softmax(logits / temperature) on the caller's RNG.
    """
    from .model import temporal_forward, depth_forward

    if temperature < 0:
        raise TrainingError("temperature must be >= 0")
    z, text_logits = temporal_forward(model, prefix)
    text_token = _draw(text_logits[-1], temperature, rng)
    audio_tokens: list[int] = []
    for _ in range(N_AUDIO_STREAMS):
        logits = depth_forward(model, z[-1], audio_tokens, text_token)
        audio_tokens.append(_draw(logits, temperature, rng))
    return text_token, audio_tokens


def _draw(logits: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    if temperature == 0:
        return int(np.argmax(logits))
    probs = _softmax(logits / temperature)
    return int(rng.choice(probs.size, p=probs))
