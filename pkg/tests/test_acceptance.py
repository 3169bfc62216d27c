"""Acceptance suite: one test per release criterion, each printing a
PASS line (run with `pytest -s tests/test_acceptance.py` to see them).
Runs fully self-contained - no frontend, no network, no external corpora.
"""

import json
import math
import time

import numpy as np
import pytest

from duplexkit.core import TimeGrid
from duplexkit.duplexlm import (
    AdamW,
    DuplexModel,
    ToyDuplexConfig,
    TrainPreset,
    select_checkpoint,
    temporal_forward,
    train,
    weighted_loss,
)
from duplexkit.duplexlm.training import MetricLog, MetricRow
from duplexkit.evaluation import NllRecord, perplexity, stoi
from duplexkit.framebuilder import FrameChunk, pad_ratio, place_text_tokens
from duplexkit.ratesvc import RatingStore, load_pairs, summarize
from duplexkit.tensorstore import tensor_checksum
from duplexkit.tokenizer import (
    TensorRole,
    apply_migration_plan,
    decode,
    encode,
    fragmentation,
    make_migration_plan,
    train_bpe,
)
from duplexkit.turntaking import (
    classify_frames,
    frame_oracle_durations,
    stats_per_minute,
    stats_table,
    turn_events,
)
from duplexkit import vad
from .conftest import (
    event_durations,
    make_copy_task_chunks,
    random_grid_segments,
    silence,
    speech_like,
    stereo_buffer,
    tone,
)
from .test_ratesvc import make_record, write_pair_manifest
from .test_tokenizer import DEVANAGARI_SYLLABLES, LATIN_SYLLABLES, synth_corpus


def _pass(name):
    print(f"\nACCEPTANCE {name}: PASS")


def test_turn_taking_oracle_equivalence():
    """>=1000 random segment-list pairs; event durations match the frame
    oracle within one frame per event boundary; runtime < 30 s."""
    rng = np.random.default_rng(90125)
    hop_s = 0.01
    start = time.time()
    for case in range(1000):
        duration = float(rng.integers(1500, 7000)) * hop_s
        segs_a = random_grid_segments(rng, duration, hop_s)
        segs_b = random_grid_segments(rng, duration, hop_s)
        events = turn_events(segs_a, segs_b, duration)
        oracle = frame_oracle_durations(
            classify_frames(segs_a, segs_b, duration, hop_ms=10))
        ev = event_durations(events)
        counts = ev.pop("_counts")
        n_ipus = len(segs_a) + len(segs_b)
        budgets = {"ipu_a": 2 * len(segs_a), "ipu_b": 2 * len(segs_b),
                   "overlap": 2 * counts["overlap"] + 2,
                   "pause": 2 * counts["pause"] + 2,
                   "gap": 2 * counts["gap"] + 2}
        for key, n_boundaries in budgets.items():
            tolerance = hop_s * n_boundaries + 1e-9
            assert abs(ev[key] - oracle[key]) <= tolerance, (case, key)
    elapsed = time.time() - start
    assert elapsed < 30.0, f"oracle equivalence took {elapsed:.1f}s"
    _pass(f"turn-taking oracle equivalence (1000 cases in {elapsed:.1f}s)")


def test_turn_taking_construction():
    """Scripted stereo conversation through vad -> turntaking: the 2 s gap
    and 3 s overlap come back within tolerance, and the report carries the
    four-column layout."""
    sr = 16000
    a = np.concatenate([tone(30.0, sr), silence(10.0, sr),
                        tone(3.0, sr), silence(17.0, sr)])
    b = np.concatenate([silence(32.0, sr), tone(28.0, sr, freq=330.0)])
    audio = stereo_buffer(a, b, sr)

    segs_a = vad.detect_channel(audio.channel(0), sr)
    segs_b = vad.detect_channel(audio.channel(1), sr)
    events = turn_events(segs_a, segs_b, audio.duration_s)
    stats = stats_per_minute(events, audio.duration_s)
    assert stats.gap_s_per_min == pytest.approx(2.0, abs=0.05)
    assert stats.overlap_s_per_min == pytest.approx(3.0, abs=0.1)
    table = stats_table([("scripted", stats)])
    for column in ("IPU", "Pause", "Gap", "Overlap"):
        assert column in table
    _pass(f"turn-taking construction (gap {stats.gap_s_per_min:.3f} s/min, "
          f"overlap {stats.overlap_s_per_min:.3f} s/min)")


def test_pad_ratio_mechanism():
    """512 single-token words in 2048 steps -> pad ratio exactly 0.75."""
    vocab = train_bpe("a b", 259)  # byte-level: 'a' is one token
    grid = TimeGrid(n_steps=2048, rate_hz=12.5)
    from duplexkit.framebuilder import AlignedWord, Speaker
    words = []
    for i in range(512):
        start = grid.time_of_step(4 * i)
        words.append(AlignedWord(text="a", start_s=start, end_s=start + 0.05,
                                 speaker=Speaker.SYSTEM))
    stream = place_text_tokens(words, vocab, grid)
    grid_tokens = np.zeros((17, 2048), dtype=np.int32)
    grid_tokens[0] = stream
    chunk = FrameChunk(tokens=grid_tokens, text_vocab=vocab.size, audio_vocab=4)
    ratio = pad_ratio([chunk])
    assert ratio == 0.75
    _pass("pad-ratio determinism (512 tokens / 2048 steps = 0.75 exactly)")


def test_tokenizer_laws():
    """Round-trip on 10k random Unicode strings (Devanagari included) and
    strictly lower Devanagari fragmentation under the matched vocab."""
    vocab = train_bpe(synth_corpus(DEVANAGARI_SYLLABLES, 400, seed=1), 420)
    rng = np.random.default_rng(7)
    ranges = [(0x20, 0x7E), (0x900, 0x97F), (0xA0, 0x2AF), (0x4E00, 0x4E9F),
              (0x1F300, 0x1F320)]
    checked = 0
    for _ in range(10_000):
        lo, hi = ranges[int(rng.integers(len(ranges)))]
        n = int(rng.integers(0, 48))
        s = "".join(chr(int(c)) for c in rng.integers(lo, hi + 1, n))
        assert decode(encode(s, vocab), vocab) == s
        checked += 1
    assert checked == 10_000

    dev_train = synth_corpus(DEVANAGARI_SYLLABLES, 800, seed=11)
    lat_train = synth_corpus(LATIN_SYLLABLES, 2500, seed=12, max_syll=6)
    dev_eval = synth_corpus(DEVANAGARI_SYLLABLES, 300, seed=13)
    v_dev = train_bpe(dev_train, 500)
    v_lat = train_bpe(lat_train, 500)
    assert v_dev.size == v_lat.size
    matched = fragmentation(dev_eval, v_dev).tokens_per_char
    mismatched = fragmentation(dev_eval, v_lat).tokens_per_char
    assert matched < mismatched
    _pass(f"tokenizer laws (10k round-trips; fragmentation {matched:.3f} "
          f"matched < {mismatched:.3f} mismatched)")


def test_migration_plan_safety():
    """Applying a plan to a toy checkpoint: AUDIO/OTHER tensors stay
    checksum-identical; exactly the three text-vocabulary-dependent roles
    are reshaped."""
    cfg = ToyDuplexConfig(d_model=16, temporal_layers=2, heads=2, d_depth=8,
                          depth_layers=1, context_steps=8, text_vocab=50,
                          audio_vocab=12)
    model = DuplexModel(cfg, seed=21)
    manifest = model.manifest()
    plan = make_migration_plan(manifest, old_vocab_size=50, new_vocab=80)
    migrated = apply_migration_plan(plan, model.params, seed=5)

    roles = {e.name: e.role for e in manifest.entries}
    reshaped_roles = set()
    for e in manifest.entries:
        if roles[e.name] in (TensorRole.AUDIO, TensorRole.OTHER):
            assert tensor_checksum(migrated[e.name]) == e.checksum, e.name
        else:
            assert migrated[e.name].shape != e.shape, e.name
            reshaped_roles.add(roles[e.name])
            fresh = migrated[e.name]
            assert abs(fresh.mean()) <= 3 * 0.02 / math.sqrt(fresh.size)
    assert reshaped_roles == {TensorRole.TEXT_EMBED_TEMPORAL,
                              TensorRole.TEXT_EMBED_DEPTH, TensorRole.TEXT_LINEAR}
    assert migrated["embed.text"].shape == (80, 16)
    assert migrated["depth.embed.text"].shape == (80, 8)
    assert migrated["text_linear.w"].shape == (16, 80)
    assert migrated["text_linear.b"].shape == (80,)
    _pass("migration-plan safety (COPY checksums intact; 3 text roles reshaped)")


def test_gradient_suite():
    """Central finite differences over every parameter tensor of the micro
    model (d=8, 2 temporal layers, 1 depth layer, 2 steps); runtime < 5 min.

    Tensor-level check: relative L2 error <= 1e-3. Scalar-level check uses
    an absolute floor of 1e-9 because the FD noise floor (machine eps times
    loss over h) sits near 2e-11 and dominates gradients below ~1e-8.
    """
    start = time.time()
    cfg = ToyDuplexConfig(d_model=8, temporal_layers=2, heads=2, d_depth=8,
                          depth_layers=1, context_steps=4, text_vocab=7,
                          audio_vocab=6)
    model = DuplexModel(cfg, seed=3)
    rng = np.random.default_rng(11)
    tokens = np.zeros((1, 17, 2), dtype=np.int64)
    tokens[0, 0] = rng.integers(0, cfg.text_vocab, 2)
    tokens[0, 1:] = rng.integers(0, cfg.audio_vocab, (16, 2))
    targets = tokens[:, :, 1:]

    def loss_only():
        tl, al, _ = model.forward(tokens)
        loss, _, _, _ = weighted_loss(tl, targets[:, 0], al,
                                      targets[:, 1:].transpose(0, 2, 1))
        return loss

    tl, al, cache = model.forward(tokens)
    _, _, dt, da = weighted_loss(tl, targets[:, 0], al,
                                 targets[:, 1:].transpose(0, 2, 1))
    grads = model.backward(dt, da, cache)

    n_scalars = 0
    for name, param in model.params.items():
        flat = param.reshape(-1)
        analytic = grads[name].reshape(-1)
        fd = np.empty_like(analytic)
        for i in range(flat.size):
            old = flat[i]
            h = 6e-6 * max(1.0, abs(old))
            flat[i] = old + h
            lp = loss_only()
            flat[i] = old - h
            lm = loss_only()
            flat[i] = old
            fd[i] = (lp - lm) / (2 * h)
            assert abs(fd[i] - analytic[i]) <= max(
                1e-3 * max(abs(fd[i]), abs(analytic[i])), 1e-9), (name, i)
        norm = max(np.linalg.norm(fd), np.linalg.norm(analytic), 1e-12)
        rel = np.linalg.norm(fd - analytic) / norm
        assert rel <= 1e-3, (name, rel)
        n_scalars += flat.size
    elapsed = time.time() - start
    assert elapsed < 300.0, f"gradient suite took {elapsed:.1f}s"
    _pass(f"gradient suite ({len(model.params)} tensors, {n_scalars} scalars, "
          f"{elapsed:.1f}s)")


def test_loss_weight_contract():
    """The PAD*0.5 / semantic:acoustic 100:1 weighting matches a
    hand-computed weighted mean within 1e-6, and a shared-gradient probe
    under the finetune preset shows depth updates exactly 2x temporal."""
    text_logits = np.array([[0.0, 1.0, 0.0], [2.0, 0.0, 0.0]])
    text_targets = np.array([1, 0])
    audio_logits = np.zeros((1, 16, 4))
    audio_logits[0, 0] = [3.0, 0.0, 0.0, 0.0]
    audio_logits[0, 1] = [0.0, 0.0, 1.0, 0.0]
    audio_targets = np.zeros((1, 16), dtype=np.int64)
    audio_targets[0, 1] = 2

    def ce(logits, target):
        logits = np.asarray(logits, dtype=float)
        return -(logits[target] - math.log(np.exp(logits).sum()))

    hand_num = (1.0 * ce([0.0, 1.0, 0.0], 1)
                + 0.5 * ce([2.0, 0.0, 0.0], 0)
                + 100.0 * ce([3.0, 0.0, 0.0, 0.0], 0)
                + 1.0 * ce([0.0, 0.0, 1.0, 0.0], 2)
                + 100.0 * ce([0.0] * 4, 0)
                + 13.0 * ce([0.0] * 4, 0))
    hand_den = 1.0 + 0.5 + 100.0 + 1.0 + 100.0 + 13.0
    loss, _, _, _ = weighted_loss(text_logits, text_targets,
                                  audio_logits, audio_targets)
    assert loss == pytest.approx(hand_num / hand_den, abs=1e-6)

    rng = np.random.default_rng(3)
    theta = rng.normal(size=(5, 3))
    params = {"temporal.probe": theta.copy(), "depth.probe": theta.copy()}
    preset = TrainPreset.finetune()
    lrs = {"temporal.probe": preset.lr_temporal, "depth.probe": preset.lr_depth}
    opt = AdamW(params, lambda n: lrs[n], beta1=preset.beta1, beta2=preset.beta2,
                eps=preset.eps, weight_decay=preset.weight_decay,
                warmup_steps=preset.warmup_steps, record_updates=True)
    g = rng.normal(size=(5, 3))
    opt.step({"temporal.probe": g, "depth.probe": g})
    assert np.array_equal(opt.last_updates["depth.probe"],
                          2.0 * opt.last_updates["temporal.probe"])
    _pass("loss-weight contract (hand fixture 1e-6; depth update exactly 2x)")


def _causality_holds(model, rng, cfg):
    prefix = np.zeros((17, 6), dtype=np.int64)
    prefix[0] = rng.integers(0, cfg.text_vocab, 6)
    prefix[1:] = rng.integers(0, cfg.audio_vocab, (16, 6))
    z1, l1 = temporal_forward(model, prefix)
    changed = prefix.copy()
    changed[:, 5] = (changed[:, 5] + 1) % min(cfg.text_vocab, cfg.audio_vocab)
    z2, l2 = temporal_forward(model, changed)
    return np.array_equal(z1[:5], z2[:5]) and np.array_equal(l1[:5], l2[:5])


def test_toy_training_copy_task():
    """Copy task converges to >= 0.90 non-PAD text and audio accuracy within
    the 10-minute budget; causality invariants hold before and after."""
    start = time.time()
    audio_vocab = 13
    cfg = ToyDuplexConfig(d_model=64, temporal_layers=2, heads=2, d_depth=32,
                          depth_layers=1, context_steps=32, text_vocab=16,
                          audio_vocab=audio_vocab)
    chunks = make_copy_task_chunks(24, 33, audio_vocab, seed=5)
    val_chunks = make_copy_task_chunks(8, 33, audio_vocab, seed=99)

    rng = np.random.default_rng(0)
    fresh = DuplexModel(cfg, seed=7)
    assert _causality_holds(fresh, rng, cfg)
    from duplexkit.duplexlm.training import evaluate
    untrained = evaluate(fresh, val_chunks)
    untrained_loss = untrained["text_val_loss"] + untrained["audio_val_loss"]

    preset = TrainPreset.pretrain(lr=3e-3, eval_interval=100)
    result = train(chunks, cfg, preset, n_steps=400, batch_size=8, seed=7,
                   val_chunks=val_chunks)
    final = result.log.rows[-1]
    elapsed = time.time() - start
    assert final.text_accuracy_nonpad >= 0.90, final
    assert final.audio_accuracy >= 0.90, final
    assert final.text_val_loss + final.audio_val_loss < untrained_loss
    assert _causality_holds(result.model, rng, cfg)
    assert elapsed < 600.0, f"toy training took {elapsed:.1f}s"
    _pass(f"toy training (text acc {final.text_accuracy_nonpad:.3f}, audio acc "
          f"{final.audio_accuracy:.3f} in {elapsed:.0f}s)")


def test_checkpoint_selection_replay():
    """A log replaying the published fine-tuning row selects step 4812 with
    total 3.370 among dominated neighbors."""
    log = MetricLog()
    neighbors = [(4010, 1.52, 1.93), (4812, 1.474, 1.896), (5614, 1.55, 1.88),
                 (6416, 1.60, 1.87), (7218, 1.66, 1.86)]
    for step, text, audio in neighbors:
        log.append(MetricRow(step=step, train_loss=0.0, text_val_loss=text,
                             audio_val_loss=audio, text_accuracy_nonpad=0.7,
                             audio_accuracy=0.5))
    step, total = select_checkpoint(log)
    assert step == 4812
    assert total == pytest.approx(3.370, abs=1e-9)
    _pass("checkpoint selection replay (step 4812, total 3.370)")


def test_stoi_properties():
    """Identity -> 1.0; monotone decreasing over the SNR sweep; invariant
    to degraded-signal gain within 1e-6."""
    fs = 10_000
    x = speech_like(4.0, fs, seed=31)
    assert stoi(x, x, sample_rate=fs) == pytest.approx(1.0, abs=1e-6)

    rng = np.random.default_rng(32)
    scores = []
    for snr_db in (20, 10, 0, -10):
        sigma = math.sqrt(np.mean(x ** 2) / 10 ** (snr_db / 10))
        scores.append(stoi(x, x + sigma * rng.normal(0, 1, x.size), sample_rate=fs))
    assert all(a > b for a, b in zip(scores, scores[1:])), scores

    y = x + 0.1 * rng.normal(0, 1, x.size)
    base = stoi(x, y, sample_rate=fs)
    for gain in (0.05, 2.0, 40.0):
        assert stoi(x, gain * y, sample_rate=fs) == pytest.approx(base, abs=1e-6)
    _pass(f"stoi properties (snr sweep {['%.3f' % s for s in scores]})")


def test_ppl_harness():
    """Uniform distribution over 32000 tokens -> PPL 32000 within 1e-6;
    pooling is exactly split-invariant."""
    nll = math.log(32000.0)
    records = [NllRecord("a", 123, 123 * nll), NllRecord("b", 77, 77 * nll)]
    assert perplexity(records) == pytest.approx(32000.0, abs=1e-6)

    merged = [NllRecord("all", 200, 517.25)]
    split = [NllRecord("x", 60, 155.0), NllRecord("y", 140, 362.25)]
    assert perplexity(merged) == perplexity(split)
    _pass("ppl harness (uniform 32000; split-invariant pooling)")


def test_rating_service(tmp_path):
    """Blinding within binomial bounds over 200 seeded pairs; un-blinding
    correctness; duplicate rejection; bit-exact summary across restart."""
    manifest = tmp_path / "pairs.jsonl"
    write_pair_manifest(manifest, 200)
    pairs = load_pairs(manifest, seed=77)
    frac_a = sum(1 for p in pairs if p.human_position == "A") / len(pairs)
    assert 0.4 <= frac_a <= 0.6

    records = []
    for p in pairs:
        records.append(make_record(
            p.pair_id,
            naturalness_a=5 if p.human_position == "A" else 2,
            naturalness_b=5 if p.human_position == "B" else 2,
            preference=p.human_position))
    summary = summarize(records, {p.pair_id: p for p in pairs})
    assert summary.preference_human_pct == pytest.approx(100.0)

    store = RatingStore(tmp_path / "store.jsonl", pairs)
    for rec in records[:25]:
        store.submit(rec)
    from duplexkit.ratesvc import DuplicateRatingError
    with pytest.raises(DuplicateRatingError):
        store.submit(records[0])

    before = json.dumps(store.summarize().to_dict(), sort_keys=True)
    reloaded = RatingStore(store.path, pairs)
    after = json.dumps(reloaded.summarize().to_dict(), sort_keys=True)
    assert before == after
    _pass(f"rating service (blinding {frac_a:.2f} in [0.4, 0.6]; restart bit-exact)")
