"""Stereo conversation ingestion: RIFF/WAV decode, quality screen, corpus manifest.

The decoder is deliberately self-contained (no libsndfile): decode rules are
part of the contract and must be bit-deterministic across platforms.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .accel import frame_rms
from .core import AudioBuffer, DuplexkitError

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

SILENCE_FLOOR_DB = -60.0   # per 10 ms frame; standard studio noise floor
SILENCE_FRAME_MS = 10.0
CLIP_THRESHOLD = 0.999     # PCM16 round-trip can land just below full scale
DB_FLOOR = -100.0


class WavError(DuplexkitError):
    """Base class for WAV decode failures."""


class MalformedWavError(WavError):
    """The RIFF/WAVE container structure is invalid."""


class UnsupportedWavError(WavError):
    """The file is a valid container but uses a codec we do not decode."""


class TruncatedWavError(WavError):
    """The data chunk declares more bytes than the file contains."""


def read_wav(path: str | Path) -> AudioBuffer:
    """Decode a PCM16/PCM24/PCM32 or IEEE-float WAV file, mono or stereo.

    Integer samples are normalized by the type's max magnitude, so PCM16
    -32768 maps to exactly -1.0. Float samples are clipped into [-1, +1].
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body_start = pos + 8
        if chunk_id == b"fmt ":
            if chunk_size < 16 or body_start + 16 > len(raw):
                raise MalformedWavError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", raw, body_start)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                # effective format tag lives in the first 2 bytes of the GUID
                if chunk_size < 40 or body_start + 26 > len(raw):
                    raise MalformedWavError(f"{path}: extensible fmt chunk too short")
                (sub_tag,) = struct.unpack_from("<H", raw, body_start + 24)
                fmt = (sub_tag,) + fmt[1:]
        elif chunk_id == b"data":
            if body_start + chunk_size > len(raw):
                raise TruncatedWavError(
                    f"{path}: data chunk declares {chunk_size} bytes, "
                    f"only {len(raw) - body_start} present"
                )
            data = raw[body_start:body_start + chunk_size]
        pos = body_start + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None:
        raise MalformedWavError(f"{path}: missing fmt chunk")
    if data is None:
        raise MalformedWavError(f"{path}: missing data chunk")

    tag, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedWavError(f"{path}: {channels} channels (only mono/stereo)")
    if sample_rate <= 0:
        raise MalformedWavError(f"{path}: bad sample rate {sample_rate}")

    samples = _decode_samples(data, tag, bits, path)
    n_frames = samples.size // channels
    samples = samples[: n_frames * channels].reshape(n_frames, channels).T
    return AudioBuffer(samples=samples, sample_rate=int(sample_rate))


def _decode_samples(data: bytes, tag: int, bits: int, path) -> np.ndarray:
    if tag == WAVE_FORMAT_PCM:
        if bits == 16:
            return np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
        if bits == 24:
            usable = len(data) - len(data) % 3
            triplets = np.frombuffer(data[:usable], dtype=np.uint8).reshape(-1, 3)
            values = (
                triplets[:, 0].astype(np.int32)
                | (triplets[:, 1].astype(np.int32) << 8)
                | (triplets[:, 2].astype(np.int32) << 16)
            )
            values = np.where(values >= 1 << 23, values - (1 << 24), values)
            return values.astype(np.float64) / float(1 << 23)
        if bits == 32:
            return np.frombuffer(data, dtype="<i4").astype(np.float64) / float(1 << 31)
        raise UnsupportedWavError(f"{path}: {bits}-bit PCM not supported")
    if tag == WAVE_FORMAT_IEEE_FLOAT:
        if bits == 32:
            floats = np.frombuffer(data, dtype="<f4").astype(np.float64)
        elif bits == 64:
            floats = np.frombuffer(data, dtype="<f8").astype(np.float64)
        else:
            raise UnsupportedWavError(f"{path}: {bits}-bit float not supported")
        if floats.size and not np.all(np.isfinite(floats)):
            raise MalformedWavError(f"{path}: non-finite float samples")
        return np.clip(floats, -1.0, 1.0)
    raise UnsupportedWavError(f"{path}: format tag 0x{tag:04x} not supported")


def write_wav(path: str | Path, audio: AudioBuffer, fmt: str = "pcm16") -> None:
    """Write an AudioBuffer as PCM16 or IEEE float32 WAV."""
    interleaved = audio.samples.T.reshape(-1)
    if fmt == "pcm16":
        clipped = np.clip(interleaved, -1.0, 1.0)
        payload = np.round(clipped * 32767.0).astype("<i2").tobytes()
        tag, bits = WAVE_FORMAT_PCM, 16
    elif fmt == "float32":
        payload = interleaved.astype("<f4").tobytes()
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown format {fmt!r}")
    block_align = audio.channels * bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, tag, audio.channels, audio.sample_rate,
        audio.sample_rate * block_align, block_align, bits,
        b"data", len(payload),
    )
    Path(path).write_bytes(header + payload)


@dataclass(frozen=True)
class QaPolicy:
    max_clipping_ratio: float = 0.001
    max_balance_db: float = 12.0
    max_silence_fraction: float = 0.8
    min_duration_s: float = 10.0
    require_stereo: bool = True


@dataclass(frozen=True)
class QaReport:
    duration_s: float
    clipping_ratio: float
    rms_db: tuple[float, ...]      # per channel, dBFS
    balance_db: float
    silence_fraction: float
    passed: bool
    fail_reasons: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rms_db"] = list(self.rms_db)
        d["fail_reasons"] = list(self.fail_reasons)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QaReport":
        return cls(
            duration_s=d["duration_s"],
            clipping_ratio=d["clipping_ratio"],
            rms_db=tuple(d["rms_db"]),
            balance_db=d["balance_db"],
            silence_fraction=d["silence_fraction"],
            passed=d["passed"],
            fail_reasons=tuple(d.get("fail_reasons", ())),
        )


def _rms_db(x: np.ndarray) -> float:
    rms = float(np.sqrt(np.mean(x * x)))
    if rms <= 10 ** (DB_FLOOR / 20):
        return DB_FLOOR
    return 20.0 * np.log10(rms)


def qa_check(audio: AudioBuffer, policy: QaPolicy = QaPolicy()) -> QaReport:
    """Measurable proxies for recording clarity and speaker balance."""
    if audio.n_samples == 0:
        raise ValueError("cannot QA empty audio")
    if policy.require_stereo and audio.channels != 2:
        raise ValueError(f"QA policy requires stereo, got {audio.channels} channel(s)")

    samples = audio.samples
    clipping_ratio = float(np.mean(np.abs(samples) >= CLIP_THRESHOLD))
    rms_db = tuple(_rms_db(samples[c]) for c in range(audio.channels))
    balance_db = abs(rms_db[0] - rms_db[1]) if audio.channels == 2 else 0.0

    frame = max(1, int(round(audio.sample_rate * SILENCE_FRAME_MS / 1000.0)))
    if audio.n_samples >= frame:
        floor_lin = 10 ** (SILENCE_FLOOR_DB / 20.0)
        silent = np.ones(1 + (audio.n_samples - frame) // frame, dtype=bool)
        for c in range(audio.channels):
            rms = frame_rms(samples[c], frame, frame)
            silent &= rms < floor_lin
        silence_fraction = float(np.mean(silent))
    else:
        silence_fraction = 0.0

    reasons = []
    if clipping_ratio > policy.max_clipping_ratio:
        reasons.append("clipping")
    if audio.channels == 2 and balance_db > policy.max_balance_db:
        reasons.append("balance")
    if silence_fraction > policy.max_silence_fraction:
        reasons.append("silence")
    if audio.duration_s < policy.min_duration_s:
        reasons.append("duration")

    return QaReport(
        duration_s=audio.duration_s,
        clipping_ratio=clipping_ratio,
        rms_db=rms_db,
        balance_db=balance_db,
        silence_fraction=silence_fraction,
        passed=not reasons,
        fail_reasons=tuple(reasons),
    )


ALIGNMENT_SUFFIX = ".align.jsonl"


@dataclass(frozen=True)
class ManifestEntry:
    conversation_id: str
    audio_path: str
    alignment_path: str | None
    duration_s: float
    qa: QaReport
    exclude_reasons: tuple[str, ...] = ()
    alignment_missing: bool = False

    @property
    def active(self) -> bool:
        return not self.exclude_reasons


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        ids = [e.conversation_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("conversation ids must be unique")
        if ids != sorted(ids):
            raise ValueError("entries must be sorted by conversation id")

    @property
    def active_entries(self) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.active)

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                record = {
                    "conversation_id": e.conversation_id,
                    "audio_path": e.audio_path,
                    "alignment_path": e.alignment_path,
                    "duration_s": e.duration_s,
                    "qa": e.qa.to_dict(),
                    "exclude_reasons": list(e.exclude_reasons),
                    "alignment_missing": e.alignment_missing,
                }
                fh.write(json.dumps(record) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusManifest":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                entries.append(ManifestEntry(
                    conversation_id=d["conversation_id"],
                    audio_path=d["audio_path"],
                    alignment_path=d["alignment_path"],
                    duration_s=d["duration_s"],
                    qa=QaReport.from_dict(d["qa"]),
                    exclude_reasons=tuple(d.get("exclude_reasons", ())),
                    alignment_missing=d.get("alignment_missing", False),
                ))
        return cls(entries=tuple(entries))


def build_manifest(root: str | Path, policy: QaPolicy = QaPolicy(),
                   jobs: int = 1) -> CorpusManifest:
    """Pair each WAV with its alignment file by basename and QA-screen it.

    Failing entries stay in the manifest with their reasons (audit trail);
    only passing entries are 'active'. A missing alignment flags the entry
    but is not by itself an exclusion. Per-file work may fan out over
    ``jobs`` threads; assembly is a deterministic reduction ordered by id.
    """
    root = Path(root)
    wav_paths = sorted(root.glob("*.wav"))

    def make_entry(wav_path: Path) -> ManifestEntry:
        conv_id = wav_path.stem
        align_path = wav_path.with_name(conv_id + ALIGNMENT_SUFFIX)
        has_align = align_path.exists()
        try:
            audio = read_wav(wav_path)
            qa = qa_check(audio, policy)
            reasons = qa.fail_reasons
            duration = audio.duration_s
        except (WavError, ValueError) as exc:
            qa = QaReport(0.0, 0.0, (DB_FLOOR, DB_FLOOR), 0.0, 0.0, False,
                          (f"decode_error: {exc}",))
            reasons = qa.fail_reasons
            duration = 0.0
        return ManifestEntry(
            conversation_id=conv_id,
            audio_path=str(wav_path),
            alignment_path=str(align_path) if has_align else None,
            duration_s=duration,
            qa=qa,
            exclude_reasons=reasons,
            alignment_missing=not has_align,
        )

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(make_entry, wav_paths))
    else:
        entries = [make_entry(p) for p in wav_paths]
    entries.sort(key=lambda e: e.conversation_id)
    return CorpusManifest(entries=tuple(entries))
