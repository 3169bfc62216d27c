import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from duplexkit.tensorstore import tensor_checksum
from duplexkit.tokenizer import (
    BASE_VOCAB_SIZE,
    ManifestError,
    MigrationPlan,
    N_SPECIALS,
    TensorInfo,
    TensorManifest,
    TensorRole,
    TokenizerError,
    Vocab,
    apply_migration_plan,
    decode,
    encode,
    fragmentation,
    make_migration_plan,
    train_bpe,
)

DEVANAGARI_SYLLABLES = [c + m for c in "कखगचजटडतदनपबमयरलवशषसह"
                        for m in ("", "ा", "ि", "ी", "ु", "े", "ो", "्")]
LATIN_SYLLABLES = [c + v for c in "bcdfghjklmnprstv" for v in "aeiou"]


def synth_corpus(syllables, n_words, seed, min_syll=1, max_syll=4):
    rng = np.random.default_rng(seed)
    words = []
    for _ in range(n_words):
        k = int(rng.integers(min_syll, max_syll + 1))
        words.append("".join(syllables[int(i)] for i in rng.integers(0, len(syllables), k)))
    return " ".join(words)


class TestTrain:
    def test_toy_corpus_first_merge(self):
        vocab = train_bpe("abab abab", 260)
        a, b = ord("a") + N_SPECIALS, ord("b") + N_SPECIALS
        assert vocab.merges[0] == (a, b)
        assert vocab.size == 260

    def test_base_size_means_no_merges(self):
        vocab = train_bpe("abab abab", BASE_VOCAB_SIZE)
        assert vocab.merges == ()
        assert vocab.size == BASE_VOCAB_SIZE

    def test_default_target(self):
        assert Vocab(pieces=(), merges=()).target_size == 32000

    def test_empty_corpus(self):
        with pytest.raises(TokenizerError):
            train_bpe("   ", 300)

    def test_too_small_target(self):
        with pytest.raises(TokenizerError):
            train_bpe("abc", 100)

    def test_stops_when_no_pair_repeats(self):
        vocab = train_bpe("ab cd ef", 10_000)
        assert vocab.size < 300

    def test_merge_determinism(self):
        corpus = synth_corpus(LATIN_SYLLABLES, 500, seed=3)
        v1 = train_bpe(corpus, 400)
        v2 = train_bpe(corpus, 400)
        assert v1.merges == v2.merges
        assert v1.pieces == v2.pieces


class TestCoding:
    def test_empty_string(self):
        vocab = train_bpe("abab abab", 260)
        assert encode("", vocab) == []
        assert decode([], vocab) == ""

    def test_merged_word_two_tokens(self):
        vocab = train_bpe("abab abab", 260)
        assert len(encode("abab", vocab)) == 2

    def test_decode_out_of_range(self):
        vocab = train_bpe("abab abab", 260)
        with pytest.raises(TokenizerError):
            decode([vocab.size], vocab)
        with pytest.raises(TokenizerError):
            decode([-1], vocab)

    @given(st.text(alphabet=st.characters(codec="utf-8"), max_size=80))
    @settings(max_examples=400, deadline=None)
    def test_roundtrip_any_unicode(self, s):
        vocab = _CACHED_VOCAB
        assert decode(encode(s, vocab), vocab) == s

    @given(st.text(alphabet=st.characters(min_codepoint=0x0900, max_codepoint=0x097F),
                   max_size=60))
    @settings(max_examples=200, deadline=None)
    def test_roundtrip_devanagari(self, s):
        vocab = _CACHED_VOCAB
        assert decode(encode(s, vocab), vocab) == s

    def test_whitespace_fidelity(self):
        vocab = _CACHED_VOCAB
        s = "a  b\t\tc\n\n d  e"
        assert decode(encode(s, vocab), vocab) == s


_CACHED_VOCAB = train_bpe(synth_corpus(DEVANAGARI_SYLLABLES, 300, seed=0), 400)


class TestFragmentation:
    def test_single_char_words_unmerged(self):
        vocab = train_bpe("x y z", BASE_VOCAB_SIZE)
        stats = fragmentation("a b c d", vocab)
        # no end-of-word marker in this scheme: one byte, one token
        assert stats.tokens_per_word == 1.0

    def test_determinism(self):
        corpus = synth_corpus(DEVANAGARI_SYLLABLES, 200, seed=5)
        vocab = train_bpe(corpus, 350)
        s1 = fragmentation(corpus, vocab)
        s2 = fragmentation(corpus, vocab)
        assert s1 == s2

    def test_matched_script_fragment_less(self):
        dev_train = synth_corpus(DEVANAGARI_SYLLABLES, 800, seed=11)
        lat_train = synth_corpus(LATIN_SYLLABLES, 2500, seed=12, max_syll=6)
        dev_eval = synth_corpus(DEVANAGARI_SYLLABLES, 300, seed=13)
        size = 500
        v_dev = train_bpe(dev_train, size)
        v_lat = train_bpe(lat_train, size)
        assert v_dev.size == v_lat.size == size
        matched = fragmentation(dev_eval, v_dev)
        mismatched = fragmentation(dev_eval, v_lat)
        assert matched.tokens_per_char < mismatched.tokens_per_char

    def test_empty(self):
        with pytest.raises(TokenizerError):
            fragmentation("  ", _CACHED_VOCAB)


class TestVocabIo:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "vocab.txt"
        _CACHED_VOCAB.dump(path)
        loaded = Vocab.load(path)
        assert loaded == _CACHED_VOCAB

    def test_reject_garbage(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a vocab\n")
        with pytest.raises(TokenizerError):
            Vocab.load(path)


def toy_manifest(d=16, vocab=100):
    rng = np.random.default_rng(0)
    tensors = {
        "embed.text": rng.normal(size=(vocab, d)),
        "depth.embed.text": rng.normal(size=(vocab, 8)),
        "text_linear.w": rng.normal(size=(d, vocab)),
        "text_linear.b": rng.normal(size=(vocab,)),
        "embed.audio1": rng.normal(size=(33, d)),
        "temporal.0.attn.wq": rng.normal(size=(d, d)),
    }
    roles = {
        "embed.text": TensorRole.TEXT_EMBED_TEMPORAL,
        "depth.embed.text": TensorRole.TEXT_EMBED_DEPTH,
        "text_linear.w": TensorRole.TEXT_LINEAR,
        "text_linear.b": TensorRole.TEXT_LINEAR,
        "embed.audio1": TensorRole.AUDIO,
        "temporal.0.attn.wq": TensorRole.OTHER,
    }
    manifest = TensorManifest(entries=tuple(
        TensorInfo(name=n, shape=t.shape, role=roles[n], checksum=tensor_checksum(t))
        for n, t in tensors.items()))
    return manifest, tensors


class TestMigration:
    def test_same_size_force_reinits(self):
        manifest, _ = toy_manifest(vocab=100)
        plan = make_migration_plan(manifest, 100, 100, force=True)
        assert plan.actions["embed.text"].kind == "REINIT"
        assert plan.actions["embed.text"].new_shape == (100, 16)
        assert plan.actions["embed.audio1"].kind == "COPY"

    def test_same_size_without_force_copies(self):
        manifest, _ = toy_manifest(vocab=100)
        plan = make_migration_plan(manifest, 100, 100, force=False)
        assert all(a.kind == "COPY" for a in plan.actions.values())

    def test_new_size_reshapes_linear_output_axis(self):
        manifest, _ = toy_manifest(vocab=100)
        plan = make_migration_plan(manifest, 100, 1000)
        assert plan.actions["text_linear.w"].new_shape == (16, 1000)
        assert plan.actions["text_linear.b"].new_shape == (1000,)
        assert plan.actions["embed.text"].new_shape == (1000, 16)
        assert plan.actions["depth.embed.text"].new_shape == (1000, 8)

    def test_inconsistent_manifest(self):
        manifest, _ = toy_manifest(vocab=100)
        with pytest.raises(ManifestError):
            make_migration_plan(manifest, 99, 1000)

    def test_apply_copies_bitwise_and_reinit_shapes(self):
        manifest, tensors = toy_manifest(vocab=100)
        plan = make_migration_plan(manifest, 100, 64)
        out = apply_migration_plan(plan, tensors, seed=5)
        for name in ("embed.audio1", "temporal.0.attn.wq"):
            assert tensor_checksum(out[name]) == tensor_checksum(tensors[name])
        assert out["embed.text"].shape == (64, 16)
        assert out["text_linear.w"].shape == (16, 64)
        # seeded normal(0, 0.02): sample mean within 3 sigma / sqrt(n)
        fresh = out["embed.text"]
        assert abs(fresh.mean()) <= 3 * 0.02 / np.sqrt(fresh.size)
        assert fresh.std() == pytest.approx(0.02, rel=0.15)

    def test_apply_is_seed_deterministic(self):
        manifest, tensors = toy_manifest(vocab=100)
        plan = make_migration_plan(manifest, 100, 64)
        out1 = apply_migration_plan(plan, tensors, seed=5)
        out2 = apply_migration_plan(plan, tensors, seed=5)
        out3 = apply_migration_plan(plan, tensors, seed=6)
        np.testing.assert_array_equal(out1["embed.text"], out2["embed.text"])
        assert not np.allclose(out1["embed.text"], out3["embed.text"])

    def test_plan_io_roundtrip(self, tmp_path):
        manifest, _ = toy_manifest(vocab=100)
        plan = make_migration_plan(manifest, 100, 64)
        path = tmp_path / "plan.jsonl"
        plan.dump(path)
        loaded = MigrationPlan.load(path)
        assert loaded == plan

    def test_manifest_io_roundtrip(self, tmp_path):
        manifest, _ = toy_manifest()
        path = tmp_path / "manifest.jsonl"
        manifest.dump(path)
        assert TensorManifest.load(path) == manifest

    def test_manifest_invariants(self):
        info = TensorInfo("a", (2, 2), TensorRole.OTHER, 0)
        with pytest.raises(ManifestError):
            TensorManifest(entries=(info, info))
        with pytest.raises(ManifestError):
            TensorManifest(entries=(TensorInfo("b", (0,), TensorRole.OTHER, 0),))
