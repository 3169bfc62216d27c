import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from duplexkit.vad import (
    SpeechSegment,
    VadConfig,
    VadError,
    apply_min_duration_rules,
    detect_speech,
    dump_segments,
    frame_energies,
    load_segments,
    validate_segments,
)
from .conftest import silence, tone

SR = 16000


class TestFrameEnergies:
    def test_full_scale_constant(self):
        e = frame_energies(np.ones(SR), SR)
        assert np.allclose(e, 0.0)
        assert e.size == 1 + (SR - 400) // 160

    def test_all_zeros_floored(self):
        e = frame_energies(np.zeros(SR), SR)
        assert np.all(e == -100.0)

    def test_sine_rms(self):
        e = frame_energies(tone(1.0, amp=0.5), SR)
        # RMS of a 0.5-amplitude sine is 0.5/sqrt(2) = -9.03 dBFS
        assert np.allclose(e, -9.03, atol=0.2)

    def test_window_longer_than_signal(self):
        with pytest.raises(VadError):
            frame_energies(np.ones(100), SR)
        with pytest.raises(VadError):
            frame_energies(np.zeros(0), SR)


class TestDetectSpeech:
    def test_all_silence(self):
        assert detect_speech(frame_energies(silence(2.0), SR)) == []

    def test_tone_covering_file(self):
        segs = detect_speech(frame_energies(tone(2.0), SR))
        assert len(segs) == 1
        assert segs[0].start_s == 0.0
        assert segs[0].end_s == pytest.approx(2.0, abs=0.0101)

    def test_two_tones_with_gap(self):
        x = np.concatenate([tone(1.0), silence(0.3), tone(0.7)])
        segs = detect_speech(frame_energies(x, SR))
        assert len(segs) == 2
        assert segs[0].start_s == pytest.approx(0.0, abs=0.0101)
        assert segs[0].end_s == pytest.approx(1.0, abs=0.0101)
        assert segs[1].start_s == pytest.approx(1.3, abs=0.0101)
        assert segs[1].end_s == pytest.approx(2.0, abs=0.0101)

    def test_short_gap_merged(self):
        x = np.concatenate([tone(0.5), silence(0.1), tone(0.5)])
        segs = detect_speech(frame_energies(x, SR))
        assert len(segs) == 1

    def test_min_silence_sweep(self):
        # 300 ms gap: merged once min_silence exceeds it, split below
        x = np.concatenate([tone(1.0), silence(0.3), tone(0.7)])
        energies = frame_energies(x, SR)
        for min_silence_ms, expected in ((100.0, 2), (200.0, 2), (310.0, 1), (500.0, 1)):
            segs = detect_speech(energies, VadConfig(min_silence_ms=min_silence_ms))
            assert len(segs) == expected, min_silence_ms

    def test_short_blip_dropped(self):
        x = np.concatenate([silence(1.0), tone(0.05), silence(1.0)])
        segs = detect_speech(frame_energies(x, SR))
        assert segs == []

    def test_output_satisfies_invariants(self, rng):
        for _ in range(20):
            n_events = rng.integers(1, 5)
            parts = [silence(0.5)]
            for _ in range(n_events):
                parts.append(tone(float(rng.uniform(0.15, 0.8)),
                                  amp=float(rng.uniform(0.2, 0.8))))
                parts.append(silence(float(rng.uniform(0.25, 0.9))))
            segs = detect_speech(frame_energies(np.concatenate(parts), SR))
            validate_segments(segs, min_silence_s=0.2)

    def test_time_shift_equivariance(self):
        base = np.concatenate([silence(0.5), tone(1.0), silence(0.4),
                               tone(0.6), silence(0.5)])
        ref = detect_speech(frame_energies(base, SR))
        for k in (3, 17):
            shifted = np.concatenate([np.zeros(k * 160), base])
            segs = detect_speech(frame_energies(shifted, SR))
            assert len(segs) == len(ref)
            for a, b in zip(ref, segs):
                assert b.start_s - a.start_s == pytest.approx(k * 0.01, abs=0.0101)
                assert b.end_s - a.end_s == pytest.approx(k * 0.01, abs=0.0101)


class TestMinDurationRules:
    @given(st.lists(st.booleans(), min_size=0, max_size=200),
           st.integers(min_value=1, max_value=12),
           st.integers(min_value=1, max_value=25))
    @settings(max_examples=300, deadline=None)
    def test_idempotent(self, mask, min_speech, min_silence):
        mask = np.array(mask, dtype=bool)
        once = apply_min_duration_rules(mask, min_speech, min_silence)
        twice = apply_min_duration_rules(once, min_speech, min_silence)
        np.testing.assert_array_equal(once, twice)

    def test_drop_then_merge(self):
        #          sssss....ss...sssss  with min_speech 5, min_silence 4
        mask = np.array([1]*5 + [0]*4 + [1]*2 + [0]*3 + [1]*5, dtype=bool)
        out = apply_min_duration_rules(mask, 5, 4)
        # short speech [9:11] dropped, then combined silence 4+2+3=9 >= 4 stays
        expected = np.array([1]*5 + [0]*9 + [1]*5, dtype=bool)
        np.testing.assert_array_equal(out, expected)

    def test_interior_short_silence_merged(self):
        mask = np.array([1]*6 + [0]*2 + [1]*6, dtype=bool)
        out = apply_min_duration_rules(mask, 5, 4)
        assert out.all()

    def test_leading_trailing_silence_never_merged(self):
        mask = np.array([0]*2 + [1]*6 + [0]*2, dtype=bool)
        out = apply_min_duration_rules(mask, 5, 4)
        np.testing.assert_array_equal(out, mask)


class TestSegments:
    def test_validation(self):
        with pytest.raises(ValueError):
            SpeechSegment(start_s=1.0, end_s=1.0)
        with pytest.raises(ValueError):
            SpeechSegment(start_s=-0.1, end_s=1.0)
        with pytest.raises(ValueError):
            validate_segments([SpeechSegment(0, 1), SpeechSegment(1.05, 2)],
                              min_silence_s=0.2)

    def test_io_roundtrip(self, tmp_path):
        segs = {0: [SpeechSegment(0.0, 1.5), SpeechSegment(2.0, 3.25)],
                1: [SpeechSegment(0.5, 0.75)]}
        path = tmp_path / "segs.jsonl"
        dump_segments(path, segs)
        loaded = load_segments(path)
        assert loaded == segs

    def test_config_validation(self):
        with pytest.raises(ValueError):
            VadConfig(window_ms=5, hop_ms=10)
        with pytest.raises(ValueError):
            VadConfig(min_speech_ms=0)
