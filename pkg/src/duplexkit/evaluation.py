"""Evaluation harness: prompted-continuation segmentation, short-time
objective intelligibility, perplexity from external per-token
log-probabilities, and the three-table report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .accel import segment_correlation_mean
from .core import AudioBuffer, DuplexkitError
from .turntaking import TurnStats

# Intelligibility metric constants (one table; the docs carry the same one).
STOI_FS = 10_000          # analysis sample rate, Hz
STOI_FRAME = 256          # frame length, samples
STOI_HOP = 128            # 50% overlap
STOI_NFFT = 512           # zero-padded spectrum size
STOI_NUM_BANDS = 15       # one-third-octave bands
STOI_MIN_FREQ = 150.0     # center frequency of the lowest band, Hz
STOI_SEG_FRAMES = 30      # analysis segment length (384 ms)
STOI_BETA_DB = -15.0      # lower signal-to-distortion bound, dB
STOI_DYN_RANGE_DB = 40.0  # silent-frame removal criterion, dB

_CLIP_FACTOR = 1.0 + 10.0 ** (-STOI_BETA_DB / 20.0)


class EvalError(DuplexkitError):
    pass


# --- prompted continuation ----------------------------------------------------

@dataclass(frozen=True)
class ContinuationSegment:
    conversation_id: str
    index: int
    window_start_s: float
    window_end_s: float
    prompt_end_s: float
    temperature: float | None = None

    @property
    def prompt(self) -> tuple[float, float]:
        return (self.window_start_s, self.prompt_end_s)

    @property
    def target(self) -> tuple[float, float]:
        return (self.prompt_end_s, self.window_end_s)


def segment_for_continuation(duration_s: float, conversation_id: str = "",
                             window_s: float = 30.0, prompt_s: float = 10.0,
                             temperature: float | None = None) -> list[ContinuationSegment]:
    """Non-overlapping windows aligned to multiples of ``window_s`` from 0;
    the partial tail is dropped. Each window's first ``prompt_s`` seconds
    are the prompt, the rest is the generation target."""
    if duration_s < 0:
        raise EvalError("duration must be >= 0")
    n = int(math.floor(duration_s / window_s + 1e-9))
    return [
        ContinuationSegment(
            conversation_id=conversation_id,
            index=i,
            window_start_s=i * window_s,
            window_end_s=(i + 1) * window_s,
            prompt_end_s=i * window_s + prompt_s,
            temperature=temperature,
        )
        for i in range(n)
    ]


# --- short-time objective intelligibility --------------------------------------

def _stoi_window() -> np.ndarray:
    # Hann without the zero endpoints; sums to one at 50% overlap
    return np.hanning(STOI_FRAME + 2)[1:-1]


def _frame(x: np.ndarray) -> np.ndarray:
    n_frames = 1 + (x.size - STOI_FRAME) // STOI_HOP
    idx = STOI_HOP * np.arange(n_frames)[:, None] + np.arange(STOI_FRAME)[None, :]
    return x[idx]


def _remove_silent_frames(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop frames more than 40 dB below the loudest clean frame, judged on
    the clean signal only, and overlap-add the survivors back together."""
    w = _stoi_window()
    frames_x = _frame(x) * w
    frames_y = _frame(y) * w
    energies = 20.0 * np.log10(np.linalg.norm(frames_x, axis=1) + 1e-15)
    keep = energies > energies.max() - STOI_DYN_RANGE_DB
    frames_x = frames_x[keep]
    frames_y = frames_y[keep]
    n = frames_x.shape[0]
    out_len = STOI_HOP * (n - 1) + STOI_FRAME
    xs = np.zeros(out_len)
    ys = np.zeros(out_len)
    for i in range(n):
        xs[i * STOI_HOP:i * STOI_HOP + STOI_FRAME] += frames_x[i]
        ys[i * STOI_HOP:i * STOI_HOP + STOI_FRAME] += frames_y[i]
    return xs, ys


def _third_octave_matrix() -> np.ndarray:
    """Band-assignment matrix (bands x bins) with edges snapped to the
    nearest FFT bin."""
    freqs = np.linspace(0, STOI_FS / 2, STOI_NFFT // 2 + 1)
    j = np.arange(STOI_NUM_BANDS)
    centers = STOI_MIN_FREQ * 2.0 ** (j / 3.0)
    lows = centers * 2.0 ** (-1.0 / 6.0)
    highs = centers * 2.0 ** (1.0 / 6.0)
    obm = np.zeros((STOI_NUM_BANDS, freqs.size))
    for b in range(STOI_NUM_BANDS):
        lo = int(np.argmin(np.abs(freqs - lows[b])))
        hi = int(np.argmin(np.abs(freqs - highs[b])))
        obm[b, lo:hi] = 1.0
    return obm


def _band_envelopes(x: np.ndarray) -> np.ndarray:
    frames = _frame(x) * _stoi_window()
    spec = np.fft.rfft(frames, n=STOI_NFFT, axis=1)
    power = (spec.real ** 2 + spec.imag ** 2)
    return np.sqrt(power @ _third_octave_matrix().T)  # (frames, bands)


def _as_mono(signal, name: str) -> tuple[np.ndarray, int | None]:
    if isinstance(signal, AudioBuffer):
        if signal.channels != 1:
            raise EvalError(f"{name} signal must be mono")
        return np.asarray(signal.channel(0), dtype=np.float64), signal.sample_rate
    return np.asarray(signal, dtype=np.float64), None


def stoi(clean, degraded, sample_rate: int | None = None) -> float:
    """Short-time objective intelligibility of ``degraded`` against ``clean``.

    Both signals are resampled to 10 kHz, silent clean frames are removed
    from both, one-third-octave band envelopes are compared over 384 ms
    segments with a clipped, energy-normalized correlation, and the score
    is the mean over bands and segments (in [~0, 1], higher = more
    intelligible).
    """
    x, fs_x = _as_mono(clean, "clean")
    y, fs_y = _as_mono(degraded, "degraded")
    fs = fs_x if fs_x is not None else sample_rate
    if fs is None:
        raise EvalError("sample rate required when passing raw arrays")
    if fs_x is not None and fs_y is not None and fs_x != fs_y:
        raise EvalError(f"sample rates differ: {fs_x} vs {fs_y}")
    if x.size != y.size:
        raise EvalError(f"length mismatch: {x.size} vs {y.size}")
    if fs != STOI_FS:
        g = math.gcd(int(fs), STOI_FS)
        x = resample_poly(x, STOI_FS // g, int(fs) // g)
        y = resample_poly(y, STOI_FS // g, int(fs) // g)
    if x.size < STOI_FRAME:
        raise EvalError("signal shorter than one frame")
    x, y = _remove_silent_frames(x, y)

    x_bands = _band_envelopes(x)
    y_bands = _band_envelopes(y)
    if x_bands.shape[0] < STOI_SEG_FRAMES:
        raise EvalError(
            f"only {x_bands.shape[0]} frames after silent-frame removal; "
            f"need at least {STOI_SEG_FRAMES}")
    return segment_correlation_mean(x_bands, y_bands, STOI_SEG_FRAMES, _CLIP_FACTOR)


# --- perplexity -----------------------------------------------------------------

@dataclass(frozen=True)
class NllRecord:
    segment_id: str
    n_tokens: int
    nll_sum: float  # natural log

    def __post_init__(self):
        if self.n_tokens <= 0:
            raise EvalError(f"{self.segment_id}: token count must be positive")
        if self.nll_sum < 0:
            raise EvalError(f"{self.segment_id}: negative log-likelihood sum must be >= 0")


def perplexity(records: list[NllRecord]) -> float:
    """exp of the token-pooled mean negative log-probability."""
    if not records:
        raise EvalError("no NLL records")
    total_tokens = sum(r.n_tokens for r in records)
    total_nll = sum(r.nll_sum for r in records)
    return math.exp(total_nll / total_tokens)


def load_nll_records(path: str | Path) -> list[NllRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                records.append(NllRecord(segment_id=str(d["segment_id"]),
                                         n_tokens=int(d["n_tokens"]),
                                         nll_sum=float(d["nll_sum"])))
    return records


def dump_nll_records(path: str | Path, records: list[NllRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"segment_id": r.segment_id, "n_tokens": r.n_tokens,
                                 "nll_sum": r.nll_sum}) + "\n")


# --- report ---------------------------------------------------------------------

GROUND_TRUTH_LABEL = "ground-truth"


@dataclass(frozen=True)
class CodecRow:
    label: str
    n_segments: int
    stoi_mean: float
    stoi_std: float
    pesq_mean: float | None = None  # supplied externally if at all
    pesq_std: float | None = None


@dataclass(frozen=True)
class PplRow:
    label: str
    temperature: float | None
    ppl: float


@dataclass(frozen=True)
class TurnRow:
    label: str
    temperature: float | None
    stats: TurnStats


@dataclass(frozen=True)
class EvalReport:
    codec: tuple[CodecRow, ...] = ()
    ppl: tuple[PplRow, ...] = ()
    turn: tuple[TurnRow, ...] = ()

    def to_json(self) -> str:
        payload = {
            "codec": [vars(r) for r in self.codec],
            "ppl": [vars(r) for r in self.ppl],
            "turn": [{"label": r.label, "temperature": r.temperature,
                      "stats": r.stats.to_dict()} for r in self.turn],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(
            codec=tuple(CodecRow(**r) for r in d.get("codec", [])),
            ppl=tuple(PplRow(**r) for r in d.get("ppl", [])),
            turn=tuple(TurnRow(label=r["label"], temperature=r["temperature"],
                               stats=TurnStats.from_dict(r["stats"]))
                       for r in d.get("turn", [])),
        )


def make_report(codec: list[CodecRow] | None = None,
                ppl: list[PplRow] | None = None,
                turn: list[TurnRow] | None = None) -> EvalReport:
    """Bundle whatever result sections exist; each table carries one row per
    sampling temperature plus the ground-truth row when provided."""
    if not (codec or ppl or turn):
        raise EvalError("at least one result section required")
    return EvalReport(codec=tuple(codec or ()), ppl=tuple(ppl or ()),
                      turn=tuple(turn or ()))


def render_text(report: EvalReport) -> str:
    lines: list[str] = []
    if report.codec:
        lines.append("Codec quality (ground truth vs re-synthesis)")
        lines.append(f"{'Segments':<28}{'PESQ':>14}{'STOI':>14}")
        for r in report.codec:
            pesq = f"{r.pesq_mean:.2f} ± {r.pesq_std:.2f}" if r.pesq_mean is not None else "—"
            stoi_s = f"{r.stoi_mean:.3f} ± {r.stoi_std:.3f}"
            lines.append(f"{r.label + f' (n={r.n_segments})':<28}{pesq:>14}{stoi_s:>14}")
        lines.append("")
    if report.ppl:
        lines.append("Transcript perplexity (lower is better)")
        lines.append(f"{'Model':<28}{'tau':>8}{'PPL':>10}")
        for r in report.ppl:
            tau = f"{r.temperature:.1f}" if r.temperature is not None else "--"
            lines.append(f"{r.label:<28}{tau:>8}{r.ppl:>10.1f}")
        lines.append("")
    if report.turn:
        lines.append("Turn-taking statistics (s/min; IPU as count/min)")
        lines.append(f"{'Model':<28}{'tau':>8}{'IPU':>9}{'Pause':>9}{'Gap':>9}{'Overlap':>9}")
        for r in report.turn:
            tau = f"{r.temperature:.1f}" if r.temperature is not None else "--"
            s = r.stats
            lines.append(f"{r.label:<28}{tau:>8}{s.ipu_count_per_min:>9.2f}"
                         f"{s.pause_s_per_min:>9.2f}{s.gap_s_per_min:>9.2f}"
                         f"{s.overlap_s_per_min:>9.2f}")
        lines.append("")
    return "\n".join(lines)
