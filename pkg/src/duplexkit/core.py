"""Shared domain types: audio buffers, the 12.5 Hz token grid, run configuration.

Everything here is an immutable value type so pipeline stages can share
instances across workers without copying.
"""

from __future__ import annotations

import dataclasses
import math
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FRAME_RATE_HZ = 12.5  # token frame rate of the duplex stream stack
CHUNK_STEPS = 2048    # steps per training sample (~163.84 s at 12.5 Hz)


class DuplexkitError(Exception):
    """Base class for all errors raised by this package."""


class GridRangeError(DuplexkitError):
    """A time falls outside the grid it is being mapped onto."""


class ConfigError(DuplexkitError):
    """A configuration file or override could not be parsed."""


@dataclass(frozen=True)
class AudioBuffer:
    """Multi-channel PCM audio, channel-major, amplitudes in [-1, +1].

    ``samples`` has shape (channels, n); the array is marked read-only on
    construction so buffers can be shared freely.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got ndim={arr.ndim}")
        if arr.shape[0] not in (1, 2):
            raise ValueError(f"expected 1 or 2 channels, got {arr.shape[0]}")
        if not isinstance(self.sample_rate, (int, np.integer)) or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("samples contain non-finite values")
        if arr.size and (arr.min() < -1.0 or arr.max() > 1.0):
            raise ValueError("samples outside [-1.0, +1.0]")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate

    def channel(self, i: int) -> np.ndarray:
        return self.samples[i]


# Guard against representation error in t * rate_hz: a step computed from
# time_of_step(i) must floor back to i.
_STEP_EPS = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform frame grid; maps wall-clock seconds to step indices and back."""

    n_steps: int
    rate_hz: float = FRAME_RATE_HZ

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")

    @property
    def duration_s(self) -> float:
        return self.n_steps / self.rate_hz

    def step_of_time(self, t: float) -> int:
        """floor(t * rate_hz); a token is never placed before its onset."""
        if t < 0:
            raise GridRangeError(f"negative time {t}")
        step = int(math.floor(t * self.rate_hz + _STEP_EPS))
        if step >= self.n_steps:
            raise GridRangeError(
                f"time {t} s maps to step {step}, beyond grid end ({self.n_steps} steps)"
            )
        return step

    def time_of_step(self, i: int) -> float:
        if not 0 <= i < self.n_steps:
            raise GridRangeError(f"step {i} outside [0, {self.n_steps})")
        return i / self.rate_hz


def substream_rng(seed: int, name: str) -> np.random.Generator:
    """Named RNG substream derived from the single run seed.

    The name is hashed with crc32 (not Python's salted hash) so the same
    (seed, name) pair yields the same stream in every interpreter session.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


@dataclass(frozen=True)
class RunConfig:
    """All pipeline knobs in one place; identical config + inputs means
    bit-identical outputs for every deterministic stage."""

    seed: int = 0

    # QA policy
    qa_max_clipping_ratio: float = 0.001
    qa_max_balance_db: float = 12.0
    qa_max_silence_fraction: float = 0.8
    qa_min_duration_s: float = 10.0

    # VAD
    vad_window_ms: float = 25.0
    vad_hop_ms: float = 10.0
    vad_threshold_db_offset: float = 10.0
    vad_absolute_floor_db: float = -40.0
    vad_min_speech_ms: float = 100.0
    vad_min_silence_ms: float = 200.0

    # Tokenizer
    vocab_target_size: int = 32000

    # Frame building
    frame_rate_hz: float = FRAME_RATE_HZ
    chunk_steps: int = CHUNK_STEPS
    audio_vocab: int = 2048  # per-codebook size; a knob, not a published constant

    # Toy model dims
    d_model: int = 64
    temporal_layers: int = 2
    heads: int = 2
    d_depth: int = 32
    depth_layers: int = 1
    context_steps: int = 128

    # Optimizer constants
    adam_beta1: float = 0.9
    adam_beta2: float = 0.95
    adam_eps: float = 1e-5
    weight_decay: float = 0.1
    lr_pretrain: float = 3e-5
    lr_finetune_temporal: float = 2e-6
    lr_finetune_depth: float = 4e-6
    warmup_steps: int = 50
    eval_interval: int = 802

    # Evaluation
    continuation_window_s: float = 30.0
    continuation_prompt_s: float = 10.0
    temperatures: tuple[float, ...] = (0.8, 0.9, 1.0)

    def rng(self, stream: str) -> np.random.Generator:
        return substream_rng(self.seed, stream)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        values = parse_config_file(path)
        if overrides:
            values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(values)

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(raw, known[key].type, key)
        return cls(**kwargs)


def _coerce(raw, type_hint: str, key: str):
    if isinstance(raw, (tuple, list)):
        return tuple(float(v) for v in raw)
    if not isinstance(raw, str):
        return raw
    hint = str(type_hint)
    try:
        if hint.startswith("tuple"):
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if hint == "int":
            return int(raw)
        if hint == "float":
            return float(raw)
        if hint == "bool":
            return raw.lower() in ("1", "true", "yes", "on")
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return raw


def parse_config_file(path: str | Path) -> dict:
    """Line-oriented key=value config; '#' starts a comment, blanks ignored."""
    values: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = stripped.split("=", 1)
        values[key.strip()] = value.strip()
    return values
