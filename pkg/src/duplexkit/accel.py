"""Hot frame-level kernels: numba-jitted with a pure-numpy fallback.

Set ``DUPLEXKIT_NO_NUMBA=1`` to select the numpy path (useful where numba
is unavailable or JIT warm-up is unwanted). Both implementations are always
importable; the module-level names bind to the selected one. The big
matrix work in the toy model stays on plain numpy/BLAS - jitting it buys
nothing - so only the per-frame loops live here.

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np


def _flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


NUMBA_ENABLED = not _flag("DUPLEXKIT_NO_NUMBA")
if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        NUMBA_ENABLED = False


# --- frame RMS -------------------------------------------------------------

def frame_rms_numpy(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    """Linear RMS per frame; final partial window dropped."""
    n_frames = 1 + (x.size - window) // hop
    idx = hop * np.arange(n_frames)[:, None] + np.arange(window)[None, :]
    frames = x[idx]
    return np.sqrt(np.mean(frames * frames, axis=1))


def _frame_rms_loop(x, window, hop, out):
    n_frames = out.size
    for f in range(n_frames):
        start = f * hop
        acc = 0.0
        for i in range(start, start + window):
            acc += x[i] * x[i]
        out[f] = np.sqrt(acc / window)
    return out


# --- midpoint state classification ------------------------------------------

def _contains_sorted_numpy(starts: np.ndarray, ends: np.ndarray, t: np.ndarray) -> np.ndarray:
    if starts.size == 0:
        return np.zeros(t.shape, dtype=bool)
    idx = np.searchsorted(starts, t, side="right") - 1
    hit = idx >= 0
    hit[hit] = t[hit] < ends[idx[hit]]
    return hit


def midpoint_states_numpy(starts_a, ends_a, starts_b, ends_b, mids) -> np.ndarray:
    """Per-frame state code: 0 neither, 1 A only, 2 B only, 3 both."""
    in_a = _contains_sorted_numpy(starts_a, ends_a, mids)
    in_b = _contains_sorted_numpy(starts_b, ends_b, mids)
    return (in_a.astype(np.uint8) | (in_b.astype(np.uint8) << 1)).astype(np.uint8)


def _midpoint_states_loop(starts_a, ends_a, starts_b, ends_b, mids, out):
    na = starts_a.size
    nb = starts_b.size
    ia = 0
    ib = 0
    for f in range(mids.size):
        t = mids[f]
        while ia < na and ends_a[ia] <= t:
            ia += 1
        while ib < nb and ends_b[ib] <= t:
            ib += 1
        state = 0
        if ia < na and starts_a[ia] <= t:
            state |= 1
        if ib < nb and starts_b[ib] <= t:
            state |= 2
        out[f] = state
    return out


# --- intelligibility segment correlations ------------------------------------

_CORR_EPS = 1e-15


def segment_correlation_mean_numpy(x_bands: np.ndarray, y_bands: np.ndarray,
                                   seg_len: int, clip_factor: float) -> float:
    """Mean clipped, normalized correlation over sliding analysis segments.

    ``x_bands``/``y_bands`` are (n_frames, n_bands) band envelopes; segments
    are every run of ``seg_len`` consecutive frames (stride one frame). The
    degraded segment is energy-normalized to the clean one, clipped at
    ``clip_factor`` times the clean envelope, then correlated per band.
    """
    from numpy.lib.stride_tricks import sliding_window_view

    x_seg = sliding_window_view(x_bands, seg_len, axis=0)  # (M, bands, seg)
    y_seg = sliding_window_view(y_bands, seg_len, axis=0)
    x_norm = np.sqrt(np.sum(x_seg * x_seg, axis=-1, keepdims=True))
    y_norm = np.sqrt(np.sum(y_seg * y_seg, axis=-1, keepdims=True))
    alpha = x_norm / (y_norm + _CORR_EPS)
    y_clip = np.minimum(y_seg * alpha, x_seg * clip_factor)

    xc = x_seg - np.mean(x_seg, axis=-1, keepdims=True)
    yc = y_clip - np.mean(y_clip, axis=-1, keepdims=True)
    num = np.sum(xc * yc, axis=-1)
    den = np.sqrt(np.sum(xc * xc, axis=-1) * np.sum(yc * yc, axis=-1)) + _CORR_EPS
    return float(np.mean(num / den))


def _segment_correlation_loop(x_bands, y_bands, seg_len, clip_factor):
    n_frames, n_bands = x_bands.shape
    n_segs = n_frames - seg_len + 1
    total = 0.0
    xs = np.empty(seg_len)
    ys = np.empty(seg_len)
    for m in range(n_segs):
        for j in range(n_bands):
            x_energy = 0.0
            y_energy = 0.0
            for i in range(seg_len):
                xv = x_bands[m + i, j]
                yv = y_bands[m + i, j]
                xs[i] = xv
                ys[i] = yv
                x_energy += xv * xv
                y_energy += yv * yv
            alpha = np.sqrt(x_energy) / (np.sqrt(y_energy) + _CORR_EPS)
            x_mean = 0.0
            y_mean = 0.0
            for i in range(seg_len):
                yc = ys[i] * alpha
                bound = xs[i] * clip_factor
                if yc > bound:
                    yc = bound
                ys[i] = yc
                x_mean += xs[i]
                y_mean += yc
            x_mean /= seg_len
            y_mean /= seg_len
            num = 0.0
            xx = 0.0
            yy = 0.0
            for i in range(seg_len):
                dx = xs[i] - x_mean
                dy = ys[i] - y_mean
                num += dx * dy
                xx += dx * dx
                yy += dy * dy
            total += num / (np.sqrt(xx * yy) + _CORR_EPS)
    return total / (n_segs * n_bands)


if NUMBA_ENABLED:
    _frame_rms_jit = njit(cache=True)(_frame_rms_loop)
    _midpoint_states_jit = njit(cache=True)(_midpoint_states_loop)
    _segment_correlation_jit = njit(cache=True)(_segment_correlation_loop)

    def frame_rms(x: np.ndarray, window: int, hop: int) -> np.ndarray:
        n_frames = 1 + (x.size - window) // hop
        out = np.empty(n_frames, dtype=np.float64)
        return _frame_rms_jit(np.ascontiguousarray(x, dtype=np.float64), window, hop, out)

    def midpoint_states(starts_a, ends_a, starts_b, ends_b, mids) -> np.ndarray:
        out = np.empty(mids.size, dtype=np.uint8)
        return _midpoint_states_jit(
            np.ascontiguousarray(starts_a, dtype=np.float64),
            np.ascontiguousarray(ends_a, dtype=np.float64),
            np.ascontiguousarray(starts_b, dtype=np.float64),
            np.ascontiguousarray(ends_b, dtype=np.float64),
            np.ascontiguousarray(mids, dtype=np.float64),
            out,
        )

    def segment_correlation_mean(x_bands, y_bands, seg_len: int, clip_factor: float) -> float:
        return float(_segment_correlation_jit(
            np.ascontiguousarray(x_bands, dtype=np.float64),
            np.ascontiguousarray(y_bands, dtype=np.float64),
            seg_len, clip_factor,
        ))
else:
    def frame_rms(x: np.ndarray, window: int, hop: int) -> np.ndarray:
        return frame_rms_numpy(np.asarray(x, dtype=np.float64), window, hop)

    def midpoint_states(starts_a, ends_a, starts_b, ends_b, mids) -> np.ndarray:
        return midpoint_states_numpy(
            np.asarray(starts_a, dtype=np.float64), np.asarray(ends_a, dtype=np.float64),
            np.asarray(starts_b, dtype=np.float64), np.asarray(ends_b, dtype=np.float64),
            np.asarray(mids, dtype=np.float64),
        )

    def segment_correlation_mean(x_bands, y_bands, seg_len: int, clip_factor: float) -> float:
        return segment_correlation_mean_numpy(
            np.asarray(x_bands, dtype=np.float64),
            np.asarray(y_bands, dtype=np.float64),
            seg_len, clip_factor,
        )


def frame_rms_fallback(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    """Always the numpy path, regardless of the env flag (for A/B checks)."""
    return frame_rms_numpy(np.asarray(x, dtype=np.float64), window, hop)
