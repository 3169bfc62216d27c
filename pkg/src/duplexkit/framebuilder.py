"""Align word timestamps and audio tokens to the 12.5 Hz grid and emit
17-stream fixed-length chunks with PAD insertion and one-step acoustic delay.

Stream layout: stream 0 is the single shared text stream; streams 1-8 are
the system speaker's audio codebooks 1-8; streams 9-16 the user's. Codebook
1 of each speaker is the semantic stream, codebooks 2-8 are acoustic.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .core import DuplexkitError, GridRangeError, TimeGrid
from .tokenizer import PAD_ID, Vocab, encode

N_STREAMS = 17
TEXT_STREAM = 0
N_CODEBOOKS = 8
N_AUDIO_STREAMS = 16
SEMANTIC_STREAMS = (1, 9)
ACOUSTIC_STREAMS = tuple(s for s in range(1, N_STREAMS) if s not in SEMANTIC_STREAMS)

CHUNK_MAGIC = b"DPXCHNK1"
CHUNK_VERSION = 1
LAYOUT_DESCRIPTOR = "text:1,system:8,user:8"


class FrameBuildError(DuplexkitError):
    pass


class PlacementOverflowError(FrameBuildError):
    """A word's subword tokens were pushed past the end of the grid."""


class Speaker(Enum):
    SYSTEM = "system"
    USER = "user"


def stream_index(speaker: Speaker, codebook: int) -> int:
    """Map (speaker, codebook 1..8) to its stream index; inverse of stream_source."""
    if not 1 <= codebook <= N_CODEBOOKS:
        raise ValueError(f"codebook {codebook} outside 1..{N_CODEBOOKS}")
    base = 0 if speaker is Speaker.SYSTEM else N_CODEBOOKS
    return base + codebook


def stream_source(stream: int) -> tuple[Speaker, int]:
    if not 1 <= stream < N_STREAMS:
        raise ValueError(f"stream {stream} is not an audio stream")
    if stream <= N_CODEBOOKS:
        return Speaker.SYSTEM, stream
    return Speaker.USER, stream - N_CODEBOOKS


@dataclass(frozen=True)
class AlignedWord:
    text: str
    start_s: float
    end_s: float
    speaker: Speaker

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ValueError(f"word {self.text!r}: start {self.start_s} !< end {self.end_s}")


def load_alignment(path: str | Path) -> list[AlignedWord]:
    """Line-delimited {channel, text, start_s, end_s} records."""
    words = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            words.append(AlignedWord(text=d["text"], start_s=d["start_s"],
                                     end_s=d["end_s"], speaker=Speaker(d["channel"])))
    validate_alignment(words)
    return words


def dump_alignment(path: str | Path, words: list[AlignedWord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for w in words:
            fh.write(json.dumps({"channel": w.speaker.value, "text": w.text,
                                 "start_s": w.start_s, "end_s": w.end_s}) + "\n")


def validate_alignment(words: list[AlignedWord]) -> None:
    """Within a channel, words must be sorted by start and non-overlapping."""
    last_end = {Speaker.SYSTEM: -np.inf, Speaker.USER: -np.inf}
    last_start = {Speaker.SYSTEM: -np.inf, Speaker.USER: -np.inf}
    for w in words:
        if w.start_s < last_start[w.speaker]:
            raise FrameBuildError(f"channel {w.speaker.value} words not sorted at {w.text!r}")
        if w.start_s < last_end[w.speaker]:
            raise FrameBuildError(f"channel {w.speaker.value} words overlap at {w.text!r}")
        last_start[w.speaker] = w.start_s
        last_end[w.speaker] = w.end_s


def place_text_tokens(words: list[AlignedWord], vocab: Vocab, grid: TimeGrid) -> np.ndarray:
    """Place each word's subword tokens starting at its start step.

    Both speakers share the one text stream, ordered by start time (system
    first on exact ties). When a word's target step is already occupied the
    tokens shift forward to the next free step; everything else is PAD.
    """
    stream = np.full(grid.n_steps, PAD_ID, dtype=np.int32)
    order = sorted(range(len(words)),
                   key=lambda i: (words[i].start_s, words[i].speaker is not Speaker.SYSTEM, i))
    next_free = 0
    for i in order:
        word = words[i]
        tokens = encode(word.text, vocab)
        if not tokens:
            continue
        try:
            target = grid.step_of_time(word.start_s)
        except GridRangeError as exc:
            raise PlacementOverflowError(
                f"word {word.text!r} at {word.start_s}s starts beyond the grid") from exc
        start = max(target, next_free)
        end = start + len(tokens)
        if end > grid.n_steps:
            raise PlacementOverflowError(
                f"word {word.text!r} at {word.start_s}s needs steps "
                f"{start}..{end - 1}, grid ends at {grid.n_steps - 1}")
        stream[start:end] = tokens
        next_free = end
    return stream


def apply_acoustic_delay(audio_streams: np.ndarray, init_id: int,
                         delay_semantic: bool = False) -> np.ndarray:
    """Shift acoustic codebooks (2-8, both speakers) one step later.

    Step 0 of each shifted stream is filled with ``init_id`` and the final
    acoustic token drops off the end. Semantic streams (codebook 1) stay in
    place by default since they carry the alignment; ``delay_semantic``
    shifts every audio stream instead.
    """
    audio_streams = np.asarray(audio_streams)
    if audio_streams.shape[0] != N_AUDIO_STREAMS:
        raise FrameBuildError(f"expected {N_AUDIO_STREAMS} audio streams")
    if audio_streams.shape[1] == 0:
        raise FrameBuildError("cannot delay zero-length streams")
    out = audio_streams.copy()
    rows = _delayed_rows(delay_semantic)
    out[rows, 1:] = audio_streams[rows, :-1]
    out[rows, 0] = init_id
    return out


def undo_acoustic_delay(delayed: np.ndarray, fill_id: int = 0,
                        delay_semantic: bool = False) -> np.ndarray:
    """Inverse of the delay on steps 0..n-2; the dropped final token is
    unrecoverable and comes back as ``fill_id``."""
    delayed = np.asarray(delayed)
    out = delayed.copy()
    rows = _delayed_rows(delay_semantic)
    out[rows, :-1] = delayed[rows, 1:]
    out[rows, -1] = fill_id
    return out


def _delayed_rows(delay_semantic: bool) -> list[int]:
    if delay_semantic:
        return list(range(N_AUDIO_STREAMS))
    return [s - 1 for s in ACOUSTIC_STREAMS]


@dataclass(frozen=True)
class FrameChunk:
    """17 x steps grid of token ids. Text PAD is id 0; the audio INIT filler
    (pre-delay step 0) is one past the last valid audio id."""

    tokens: np.ndarray
    text_vocab: int
    audio_vocab: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.tokens, dtype=np.int32)
        if arr.ndim != 2 or arr.shape[0] != N_STREAMS:
            raise FrameBuildError(f"chunk tokens must be ({N_STREAMS}, steps), got {arr.shape}")
        text = arr[TEXT_STREAM]
        if text.min(initial=0) < 0 or text.max(initial=0) >= self.text_vocab:
            raise FrameBuildError("text token outside [0, text_vocab)")
        audio = arr[1:]
        if audio.min(initial=0) < 0 or audio.max(initial=0) > self.audio_vocab:
            raise FrameBuildError("audio token outside [0, audio_vocab]")
        init_mask = audio == self.init_id
        if init_mask[:, 1:].any():
            raise FrameBuildError("INIT filler appears after step 0")
        semantic_rows = [s - 1 for s in SEMANTIC_STREAMS]
        if init_mask[semantic_rows, 0].any():
            raise FrameBuildError("INIT filler appears on a semantic stream")
        arr.flags.writeable = False
        object.__setattr__(self, "tokens", arr)

    @property
    def init_id(self) -> int:
        return self.audio_vocab

    @property
    def steps(self) -> int:
        return self.tokens.shape[1]

    @property
    def pad_id(self) -> int:
        return PAD_ID


def build_chunks(text_stream: np.ndarray, audio_streams: np.ndarray,
                 text_vocab: int, audio_vocab: int,
                 chunk_steps: int = 2048) -> list[FrameChunk]:
    """Cut aligned streams into consecutive fixed-length chunks.

    The trailing partial window is dropped; streams shorter than one chunk
    yield an empty list with a warning.
    """
    text_stream = np.asarray(text_stream)
    audio_streams = np.asarray(audio_streams)
    if audio_streams.shape != (N_AUDIO_STREAMS, text_stream.shape[0]):
        raise FrameBuildError(
            f"stream length mismatch: text {text_stream.shape}, audio {audio_streams.shape}")
    n_steps = text_stream.shape[0]
    if n_steps < chunk_steps:
        warnings.warn(f"only {n_steps} steps, shorter than one {chunk_steps}-step chunk",
                      stacklevel=2)
        return []
    chunks = []
    for start in range(0, n_steps - chunk_steps + 1, chunk_steps):
        grid = np.empty((N_STREAMS, chunk_steps), dtype=np.int32)
        grid[TEXT_STREAM] = text_stream[start:start + chunk_steps]
        grid[1:] = audio_streams[:, start:start + chunk_steps]
        chunks.append(FrameChunk(tokens=grid, text_vocab=text_vocab, audio_vocab=audio_vocab))
    return chunks


def pad_ratio(chunks: list[FrameChunk]) -> float:
    """Fraction of text-stream positions holding PAD."""
    if not chunks:
        raise FrameBuildError("no chunks")
    total = sum(c.steps for c in chunks)
    pads = sum(int(np.sum(c.tokens[TEXT_STREAM] == c.pad_id)) for c in chunks)
    return pads / total


def synth_audio_tokens(rng: np.random.Generator, n_steps: int, audio_vocab: int) -> np.ndarray:
    """Seeded stand-in for codec tokens (the codec itself is out of scope)."""
    return rng.integers(0, audio_vocab, size=(N_AUDIO_STREAMS, n_steps), dtype=np.int32)


def write_chunks(path: str | Path, chunks: list[FrameChunk]) -> None:
    """Binary chunk container; little-endian, bit-exact round-trip."""
    if not chunks:
        raise FrameBuildError("refusing to write an empty chunk container")
    text_vocab = chunks[0].text_vocab
    audio_vocab = chunks[0].audio_vocab
    steps = chunks[0].steps
    for c in chunks:
        if (c.text_vocab, c.audio_vocab, c.steps) != (text_vocab, audio_vocab, steps):
            raise FrameBuildError("chunks in one container must share shape and vocab sizes")
    max_id = max(text_vocab - 1, audio_vocab)  # INIT id == audio_vocab
    dtype = np.dtype("<u2") if max_id <= np.iinfo(np.uint16).max else np.dtype("<u4")
    layout = LAYOUT_DESCRIPTOR.encode("ascii")
    header = CHUNK_MAGIC + struct.pack(
        "<HHIHIII H", CHUNK_VERSION, dtype.itemsize, len(chunks), N_STREAMS,
        steps, text_vocab, audio_vocab, len(layout))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(layout)
        for c in chunks:
            fh.write(np.ascontiguousarray(c.tokens, dtype=dtype).tobytes())


def read_chunks(path: str | Path) -> list[FrameChunk]:
    raw = Path(path).read_bytes()
    if raw[:8] != CHUNK_MAGIC:
        raise FrameBuildError(f"{path}: bad chunk container magic")
    head_size = struct.calcsize("<HHIHIII H")
    version, item, n_chunks, n_streams, steps, text_vocab, audio_vocab, layout_len = \
        struct.unpack_from("<HHIHIII H", raw, 8)
    if version != CHUNK_VERSION:
        raise FrameBuildError(f"{path}: unsupported container version {version}")
    if n_streams != N_STREAMS:
        raise FrameBuildError(f"{path}: expected {N_STREAMS} streams, header says {n_streams}")
    pos = 8 + head_size
    layout = raw[pos:pos + layout_len].decode("ascii")
    if layout != LAYOUT_DESCRIPTOR:
        raise FrameBuildError(f"{path}: unknown layout {layout!r}")
    pos += layout_len
    dtype = np.dtype("<u2") if item == 2 else np.dtype("<u4")
    per_chunk = N_STREAMS * steps * dtype.itemsize
    if pos + n_chunks * per_chunk > len(raw):
        raise FrameBuildError(f"{path}: truncated chunk data")
    chunks = []
    for i in range(n_chunks):
        grid = np.frombuffer(raw[pos + i * per_chunk: pos + (i + 1) * per_chunk],
                             dtype=dtype).reshape(N_STREAMS, steps)
        chunks.append(FrameChunk(tokens=grid.astype(np.int32),
                                 text_vocab=text_vocab, audio_vocab=audio_vocab))
    return chunks
