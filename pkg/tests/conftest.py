"""Shared synthesis helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from duplexkit.core import AudioBuffer


def tone(duration_s: float, sample_rate: int = 16000, amp: float = 0.5,
         freq: float = 440.0, phase: float = 0.0) -> np.ndarray:
    t = np.arange(int(round(duration_s * sample_rate))) / sample_rate
    return amp * np.sin(2 * np.pi * freq * t + phase)


def silence(duration_s: float, sample_rate: int = 16000) -> np.ndarray:
    return np.zeros(int(round(duration_s * sample_rate)))


def speech_like(duration_s: float, sample_rate: int = 10000,
                seed: int = 0, amp: float = 0.5) -> np.ndarray:
    """Noise with slow amplitude modulation, adequate for correlation metrics."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    envelope = (0.4 + 0.35 * np.sin(2 * np.pi * 3.0 * t)
                + 0.25 * np.sin(2 * np.pi * 0.7 * t + 1.0))
    x = rng.normal(0.0, 1.0, n) * envelope
    return amp * x / np.max(np.abs(x))


def stereo_buffer(left: np.ndarray, right: np.ndarray,
                  sample_rate: int = 16000) -> AudioBuffer:
    return AudioBuffer(samples=np.stack([left, right]), sample_rate=sample_rate)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_grid_segments(rng: np.random.Generator, duration_s: float,
                         hop_s: float = 0.01, max_segments: int = 12):
    """Random sorted, non-overlapping segments with hop-aligned boundaries.

    Hop alignment keeps pause/gap attribution decidable at frame resolution,
    so the interval arithmetic and the frame oracle agree exactly (see the
    turn-taking oracle-equivalence tests).
    """
    from duplexkit.vad import SpeechSegment

    n_hops = int(round(duration_s / hop_s))
    segments = []
    cursor = int(rng.integers(0, 40))
    for _ in range(int(rng.integers(0, max_segments + 1))):
        length = int(rng.integers(1, 400))
        if cursor + length >= n_hops:
            break
        segments.append(SpeechSegment(start_s=cursor * hop_s,
                                      end_s=(cursor + length) * hop_s))
        cursor += length + int(rng.integers(1, 300))
    return segments


def event_durations(events) -> dict[str, float]:
    from duplexkit.turntaking import EventKind

    out = {"ipu_a": 0.0, "ipu_b": 0.0, "pause": 0.0, "gap": 0.0, "overlap": 0.0}
    counts = {"pause": 0, "gap": 0, "overlap": 0}
    for e in events:
        if e.kind is EventKind.IPU:
            out["ipu_a" if e.channel == "A" else "ipu_b"] += e.duration_s
        elif e.kind is EventKind.PAUSE:
            out["pause"] += e.duration_s
            counts["pause"] += 1
        elif e.kind is EventKind.GAP:
            out["gap"] += e.duration_s
            counts["gap"] += 1
        else:
            out["overlap"] += e.duration_s
            counts["overlap"] += 1
    out["_counts"] = counts
    return out


def make_copy_task_chunks(n_chunks: int, steps: int, audio_vocab: int,
                          seed: int) -> list[np.ndarray]:
    """Synthetic duplex task with Bayes accuracy 1: every audio stream
    repeats a +1 increment of its own previous-step token (shared random
    phase per chunk), and the text stream is periodic with one word every
    4 steps (PAD elsewhere) reading out the same phase."""
    rng = np.random.default_rng(seed)
    chunks = []
    for _ in range(n_chunks):
        grid = np.zeros((17, steps), dtype=np.int64)
        r = int(rng.integers(audio_vocab))
        t = np.arange(steps)
        for s in range(16):
            grid[1 + s] = (r + t + s) % audio_vocab
        word_pos = t % 4 == 0
        text = np.zeros(steps, dtype=np.int64)
        text[word_pos] = 3 + ((r + t[word_pos]) % audio_vocab) % 4
        grid[0] = text
        chunks.append(grid)
    return chunks
