"""Energy-based voice activity detection on a single channel."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .accel import frame_rms
from .core import DuplexkitError

DB_FLOOR = -100.0
NOISE_FLOOR_PERCENTILE = 10.0  # robust to a single digital-zero frame


class VadError(DuplexkitError):
    pass


@dataclass(frozen=True)
class VadConfig:
    """Detection knobs: 25 ms / 10 ms framing, adaptive threshold at the
    10th-percentile noise floor + 10 dB, and an absolute level above which a
    frame always counts as speech (keeps a wall-to-wall talker detectable
    even when the adaptive estimate saturates)."""

    window_ms: float = 25.0
    hop_ms: float = 10.0
    threshold_db_offset: float = 10.0
    absolute_floor_db: float = -40.0
    min_speech_ms: float = 100.0
    min_silence_ms: float = 200.0

    def __post_init__(self):
        if not self.window_ms >= self.hop_ms > 0:
            raise ValueError("need window_ms >= hop_ms > 0")
        if self.min_speech_ms <= 0 or self.min_silence_ms <= 0:
            raise ValueError("durations must be positive")


@dataclass(frozen=True)
class SpeechSegment:
    start_s: float
    end_s: float

    def __post_init__(self):
        if not 0 <= self.start_s < self.end_s:
            raise ValueError(f"bad segment [{self.start_s}, {self.end_s}]")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def validate_segments(segments: list[SpeechSegment], min_silence_s: float = 0.0) -> None:
    for prev, cur in zip(segments, segments[1:]):
        if cur.start_s - prev.end_s < min_silence_s:
            raise ValueError(
                f"segments [{prev.start_s},{prev.end_s}] and [{cur.start_s},{cur.end_s}] "
                f"violate the {min_silence_s}s inter-segment silence"
            )


def frame_energies(samples: np.ndarray, sample_rate: int,
                   window_ms: float = 25.0, hop_ms: float = 10.0) -> np.ndarray:
    """Per-frame RMS in dBFS, one value per hop; silent frames floored at -100 dB."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise VadError("empty channel")
    window = int(round(sample_rate * window_ms / 1000.0))
    hop = int(round(sample_rate * hop_ms / 1000.0))
    if window > samples.size:
        raise VadError(f"window of {window} samples longer than signal ({samples.size})")
    rms = frame_rms(samples, window, hop)
    floor_lin = 10 ** (DB_FLOOR / 20.0)
    return np.where(rms > floor_lin, 20.0 * np.log10(np.maximum(rms, floor_lin)), DB_FLOOR)


def detect_speech(energies: np.ndarray, config: VadConfig = VadConfig()) -> list[SpeechSegment]:
    """Threshold frame energies adaptively and post-process into segments.

    The threshold is the lesser of (10th-percentile noise floor +
    ``threshold_db_offset``) and ``absolute_floor_db``; frames strictly above
    it are speech. Speech runs shorter than ``min_speech_ms`` are dropped,
    then silence runs shorter than ``min_silence_ms`` are merged into the
    surrounding speech. The drop/merge rules are idempotent.
    """
    energies = np.asarray(energies, dtype=np.float64)
    if energies.size == 0:
        return []
    noise_floor = float(np.percentile(energies, NOISE_FLOOR_PERCENTILE))
    threshold = min(noise_floor + config.threshold_db_offset, config.absolute_floor_db)
    speech = energies > threshold

    min_speech_frames = int(np.ceil(config.min_speech_ms / config.hop_ms))
    min_silence_frames = int(np.ceil(config.min_silence_ms / config.hop_ms))
    final = apply_min_duration_rules(speech, min_speech_frames, min_silence_frames)

    segments = []
    for v, s, e in _runs(final):
        if v:
            segments.append(_segment_from_run(s, e, energies.size, config))
    return segments


def _segment_from_run(first: int, end: int, n_frames: int,
                      config: VadConfig) -> SpeechSegment:
    """Boundary attribution at hop resolution, de-biased for window overlap.

    A frame fires on any speech sliver near the end of its window, so the
    run's first frame overstates the onset by up to window - hop; the start
    is corrected to the maximum-likelihood onset rounded to the hop grid
    (ties toward the earlier hop). The end is the first silent frame's
    start, or the last window's coverage end when the run touches the final
    frame.
    """
    hop_s = config.hop_ms / 1000.0
    window_s = config.window_ms / 1000.0
    last = end - 1
    k_start = int(np.floor((window_s - hop_s / 2.0) / hop_s + 0.5 - 1e-9))
    start_s = 0.0 if first == 0 else (first + k_start) * hop_s
    if end < n_frames:
        end_s = end * hop_s
    else:
        end_s = float(np.floor((last * hop_s + window_s) / hop_s + 0.5 - 1e-9)) * hop_s
    if start_s >= end_s:  # degenerate short run (tiny min_speech settings)
        start_s, end_s = first * hop_s, end * hop_s
    return SpeechSegment(start_s=float(start_s), end_s=float(end_s))


def apply_min_duration_rules(speech_mask: np.ndarray, min_speech_frames: int,
                             min_silence_frames: int) -> np.ndarray:
    """Drop short speech runs, then merge short interior silence runs.

    Idempotent: every surviving speech run contains at least one original
    run of ``min_speech_frames``, and every remaining interior silence run
    is at least ``min_silence_frames`` long.
    """
    runs = _runs(np.asarray(speech_mask, dtype=bool))
    runs = [(v, s, e) for v, s, e in runs if not (v and e - s < min_speech_frames)]
    # squash adjacent silence runs exposed by dropped speech
    merged: list[tuple[bool, int, int]] = []
    for v, s, e in runs:
        if merged and merged[-1][0] == v:
            merged[-1] = (v, merged[-1][1], e)
        else:
            merged.append((v, s, e))
    # short interior silences join the surrounding speech
    out = np.zeros(int(speech_mask.size), dtype=bool)
    for i, (v, s, e) in enumerate(merged):
        interior = 0 < i < len(merged) - 1
        if v or (interior and e - s < min_silence_frames):
            out[s:e] = True
    return out


def _runs(mask: np.ndarray) -> list[tuple[bool, int, int]]:
    """(value, start, end) runs over a boolean mask, end exclusive."""
    runs = []
    start = 0
    for i in range(1, mask.size + 1):
        if i == mask.size or mask[i] != mask[start]:
            runs.append((bool(mask[start]), start, i))
            start = i
    return runs


def detect_channel(samples: np.ndarray, sample_rate: int,
                   config: VadConfig = VadConfig()) -> list[SpeechSegment]:
    energies = frame_energies(samples, sample_rate, config.window_ms, config.hop_ms)
    return detect_speech(energies, config)


def dump_segments(path: str | Path, segments_by_channel: dict[int, list[SpeechSegment]]) -> None:
    """Line-delimited {channel, start_s, end_s} records, 3-decimal seconds."""
    with open(path, "w", encoding="utf-8") as fh:
        for channel in sorted(segments_by_channel):
            for seg in segments_by_channel[channel]:
                fh.write(json.dumps({
                    "channel": channel,
                    "start_s": round(seg.start_s, 3),
                    "end_s": round(seg.end_s, 3),
                }) + "\n")


def load_segments(path: str | Path) -> dict[int, list[SpeechSegment]]:
    out: dict[int, list[SpeechSegment]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            out.setdefault(int(d["channel"]), []).append(
                SpeechSegment(start_s=d["start_s"], end_s=d["end_s"]))
    for segs in out.values():
        segs.sort(key=lambda s: s.start_s)
    return out
