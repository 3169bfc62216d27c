"""Turn-taking statistics for two-channel conversations.

Events follow the inter-pausal-unit convention: an IPU is one channel's
speech segment; a silence where neither channel speaks is a pause when the
nearest surrounding IPUs belong to the same channel and a gap when they
belong to different channels; overlaps are maximal both-speaking intervals.
A brute-force per-frame scanner (`frame_oracle_durations`) implements the
same attribution rule directly on a frame-state sequence and serves as the
verification oracle for the interval arithmetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from enum import Enum
from pathlib import Path

import numpy as np

from .accel import midpoint_states
from .core import DuplexkitError
from .vad import SpeechSegment

DEFAULT_HOP_MS = 10.0


class TurnTakingError(DuplexkitError):
    pass


class FrameState(Enum):
    NEITHER = 0
    A_ONLY = 1
    B_ONLY = 2
    BOTH = 3


class EventKind(Enum):
    IPU = "ipu"
    PAUSE = "pause"
    GAP = "gap"
    OVERLAP = "overlap"


@dataclass(frozen=True)
class TurnEvent:
    kind: EventKind
    start_s: float
    end_s: float
    channel: str | None = None      # IPU / PAUSE owner: "A" or "B"
    from_channel: str | None = None  # GAP only
    to_channel: str | None = None    # GAP only

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class FrameStateSequence:
    hop_ms: float
    states: np.ndarray  # uint8 codes per FrameState

    def __post_init__(self):
        arr = np.ascontiguousarray(self.states, dtype=np.uint8)
        arr.flags.writeable = False
        object.__setattr__(self, "states", arr)

    def __len__(self) -> int:
        return self.states.size


def _bounds(segments: list[SpeechSegment]) -> tuple[np.ndarray, np.ndarray]:
    starts = np.array([s.start_s for s in segments], dtype=np.float64)
    ends = np.array([s.end_s for s in segments], dtype=np.float64)
    return starts, ends


def classify_frames(segments_a: list[SpeechSegment], segments_b: list[SpeechSegment],
                    duration_s: float, hop_ms: float = DEFAULT_HOP_MS) -> FrameStateSequence:
    """Label each frame by which channels contain its midpoint."""
    for name, segs in (("A", segments_a), ("B", segments_b)):
        for seg in segs:
            if seg.end_s > duration_s + 1e-9:
                raise TurnTakingError(
                    f"channel {name} segment ends at {seg.end_s}s, beyond duration {duration_s}s")
    hop_s = hop_ms / 1000.0
    n_frames = int(np.ceil(duration_s / hop_s - 1e-9))
    mids = (np.arange(n_frames) + 0.5) * hop_s
    starts_a, ends_a = _bounds(segments_a)
    starts_b, ends_b = _bounds(segments_b)
    states = midpoint_states(starts_a, ends_a, starts_b, ends_b, mids)
    return FrameStateSequence(hop_ms=hop_ms, states=states)


def turn_events(segments_a: list[SpeechSegment], segments_b: list[SpeechSegment],
                duration_s: float) -> list[TurnEvent]:
    """Interval-arithmetic event list: IPUs, pauses, gaps, overlaps.

    Silence bounded by the file start or end is unattributed (no event).
    When both channels stop or start at exactly the same instant, the tie
    goes to channel A; the frame oracle applies the same rule.
    """
    events: list[TurnEvent] = []
    tagged = [((s.start_s, s.end_s), "A") for s in segments_a]
    tagged += [((s.start_s, s.end_s), "B") for s in segments_b]
    for (start, end), ch in sorted(tagged):
        events.append(TurnEvent(kind=EventKind.IPU, start_s=start, end_s=end, channel=ch))

    for start, end in _intersect_intervals(segments_a, segments_b):
        events.append(TurnEvent(kind=EventKind.OVERLAP, start_s=start, end_s=end))

    union = _merge_intervals([(s.start_s, s.end_s) for s in segments_a + segments_b])
    for start, end in _complement(union, duration_s):
        if start <= 0.0 or end >= duration_s:
            continue  # leading/trailing silence: no turn to attribute it to
        before = _owner_before(start, segments_a, segments_b)
        after = _owner_after(end, segments_a, segments_b)
        if before is None or after is None:
            continue
        if before == after:
            events.append(TurnEvent(kind=EventKind.PAUSE, start_s=start, end_s=end,
                                    channel=before))
        else:
            events.append(TurnEvent(kind=EventKind.GAP, start_s=start, end_s=end,
                                    from_channel=before, to_channel=after))
    events.sort(key=lambda e: (e.start_s, e.kind.value))
    return events


def _owner_before(t: float, segs_a, segs_b) -> str | None:
    """Channel whose segment ends latest at or before t; ties go to A."""
    best, best_end = None, -1.0
    for ch, segs in (("A", segs_a), ("B", segs_b)):
        for seg in segs:
            if seg.end_s <= t + 1e-12 and seg.end_s > best_end + 1e-12:
                best, best_end = ch, seg.end_s
    return best


def _owner_after(t: float, segs_a, segs_b) -> str | None:
    """Channel whose segment starts earliest at or after t; ties go to A."""
    best, best_start = None, np.inf
    for ch, segs in (("A", segs_a), ("B", segs_b)):
        for seg in segs:
            if seg.start_s >= t - 1e-12 and seg.start_s < best_start - 1e-12:
                best, best_start = ch, seg.start_s
    return best


def _merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [(s, e) for s, e in merged]


def _intersect_intervals(segs_a: list[SpeechSegment],
                         segs_b: list[SpeechSegment]) -> list[tuple[float, float]]:
    out = []
    for a in segs_a:
        for b in segs_b:
            start = max(a.start_s, b.start_s)
            end = min(a.end_s, b.end_s)
            if start < end:
                out.append((start, end))
    return _merge_intervals(out)


def _complement(intervals: list[tuple[float, float]], duration_s: float) -> list[tuple[float, float]]:
    out = []
    cursor = 0.0
    for start, end in intervals:
        if start > cursor:
            out.append((cursor, start))
        cursor = max(cursor, end)
    if cursor < duration_s:
        out.append((cursor, duration_s))
    return out


@dataclass(frozen=True)
class TurnStats:
    """Per-minute counts and cumulated durations; overlap counted once."""

    duration_s: float
    ipu_count_per_min: float
    ipu_count_per_min_a: float
    ipu_count_per_min_b: float
    ipu_s_per_min: float
    pause_count_per_min: float
    pause_s_per_min: float
    gap_count_per_min: float
    gap_s_per_min: float
    overlap_count_per_min: float
    overlap_s_per_min: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TurnStats":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def stats_per_minute(events: list[TurnEvent], duration_s: float) -> TurnStats:
    if duration_s <= 0:
        raise TurnTakingError("duration must be positive")
    scale = 60.0 / duration_s

    def count(kind):
        return sum(1 for e in events if e.kind is kind)

    def seconds(kind):
        return sum(e.duration_s for e in events if e.kind is kind)

    return TurnStats(
        duration_s=duration_s,
        ipu_count_per_min=count(EventKind.IPU) * scale,
        ipu_count_per_min_a=sum(1 for e in events
                                if e.kind is EventKind.IPU and e.channel == "A") * scale,
        ipu_count_per_min_b=sum(1 for e in events
                                if e.kind is EventKind.IPU and e.channel == "B") * scale,
        ipu_s_per_min=seconds(EventKind.IPU) * scale,
        pause_count_per_min=count(EventKind.PAUSE) * scale,
        pause_s_per_min=seconds(EventKind.PAUSE) * scale,
        gap_count_per_min=count(EventKind.GAP) * scale,
        gap_s_per_min=seconds(EventKind.GAP) * scale,
        overlap_count_per_min=count(EventKind.OVERLAP) * scale,
        overlap_s_per_min=seconds(EventKind.OVERLAP) * scale,
    )


def frame_oracle_durations(seq: FrameStateSequence) -> dict[str, float]:
    """Brute-force scan of a frame-state sequence with the same attribution rule.

    Returns seconds of ipu_a / ipu_b / pause / gap / overlap. NEITHER runs
    touching the sequence edges stay unattributed; the owner before/after a
    run is read straight off the adjacent frame states, BOTH resolving to A
    (the same tie rule as `turn_events`).
    """
    states = seq.states
    hop_s = seq.hop_ms / 1000.0
    in_a = (states == FrameState.A_ONLY.value) | (states == FrameState.BOTH.value)
    in_b = (states == FrameState.B_ONLY.value) | (states == FrameState.BOTH.value)
    out = {
        "ipu_a": float(np.sum(in_a)) * hop_s,
        "ipu_b": float(np.sum(in_b)) * hop_s,
        "overlap": float(np.sum(states == FrameState.BOTH.value)) * hop_s,
        "pause": 0.0,
        "gap": 0.0,
    }

    def owner(state: int) -> str:
        return "A" if state in (FrameState.A_ONLY.value, FrameState.BOTH.value) else "B"

    i = 0
    n = states.size
    while i < n:
        if states[i] != FrameState.NEITHER.value:
            i += 1
            continue
        j = i
        while j < n and states[j] == FrameState.NEITHER.value:
            j += 1
        if i > 0 and j < n:  # interior run only
            before = owner(int(states[i - 1]))
            after = owner(int(states[j]))
            key = "pause" if before == after else "gap"
            out[key] += (j - i) * hop_s
        i = j
    return out


def stats_table(rows: list[tuple[str, TurnStats]], counts: bool = False) -> str:
    """Text table, one row per conversation plus a duration-weighted total.

    The default mixes units the way the usual turn-taking tables do: IPU as
    count/min, pause/gap/overlap as s/min. ``counts=True`` switches every
    column to counts.
    """
    if counts:
        cols = [("IPU", "ipu_count_per_min"), ("Pause", "pause_count_per_min"),
                ("Gap", "gap_count_per_min"), ("Overlap", "overlap_count_per_min")]
        unit = "count/min"
    else:
        cols = [("IPU", "ipu_count_per_min"), ("Pause", "pause_s_per_min"),
                ("Gap", "gap_s_per_min"), ("Overlap", "overlap_s_per_min")]
        unit = "IPU count/min, rest s/min"
    lines = [f"Turn-taking statistics (per minute, {unit})"]
    header = f"{'Conversation':<24}" + "".join(f"{name:>10}" for name, _ in cols)
    lines.append(header)
    lines.append("-" * len(header))
    total_dur = sum(stats.duration_s for _, stats in rows)
    for name, stats in rows:
        lines.append(f"{name:<24}" + "".join(
            f"{getattr(stats, attr):>10.2f}" for _, attr in cols))
    if len(rows) > 1 and total_dur > 0:
        lines.append(f"{'ALL':<24}" + "".join(
            f"{sum(getattr(s, attr) * s.duration_s for _, s in rows) / total_dur:>10.2f}"
            for _, attr in cols))
    return "\n".join(lines) + "\n"


def dump_stats(path: str | Path, rows: list[tuple[str, TurnStats]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name, stats in rows:
            fh.write(json.dumps({"conversation_id": name, **stats.to_dict()}) + "\n")


def load_stats(path: str | Path) -> list[tuple[str, TurnStats]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            name = d.pop("conversation_id")
            rows.append((name, TurnStats.from_dict(d)))
    return rows
