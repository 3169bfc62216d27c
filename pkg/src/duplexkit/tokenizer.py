"""Byte-pair subword vocabulary: training, coding, fragmentation, and the
checkpoint migration plan for vocabulary-dependent parameters.

Byte-level BPE over whitespace-delimited words. Whitespace bytes are encoded
as raw byte tokens and merges never cross a word boundary, so
decode(encode(s)) == s for every string with no marker bookkeeping. Ids:
PAD=0, BOS=1, UNK=2, the 256 bytes at 3..258, merged pieces from 259 up.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .core import DuplexkitError, substream_rng

PAD_ID = 0
BOS_ID = 1
UNK_ID = 2
N_SPECIALS = 3
BASE_VOCAB_SIZE = N_SPECIALS + 256

SPECIAL_NAMES = {PAD_ID: "<pad>", BOS_ID: "<bos>", UNK_ID: "<unk>"}

_RUNS = re.compile(r"\s+|\S+")

REINIT_MEAN = 0.0
REINIT_STD = 0.02


class TokenizerError(DuplexkitError):
    pass


class ManifestError(DuplexkitError):
    pass


@dataclass(frozen=True)
class Vocab:
    """pieces[id] is the byte string an id decodes to (b'' for specials);
    merges is the learned rule list in training order."""

    pieces: tuple[bytes, ...]
    merges: tuple[tuple[int, int], ...]
    target_size: int = 32000

    @property
    def size(self) -> int:
        return len(self.pieces)

    def merge_ranks(self) -> dict[tuple[int, int], int]:
        return {pair: rank for rank, pair in enumerate(self.merges)}

    def dump(self, path: str | Path) -> None:
        lines = [f"DPXVOCAB 1 target_size={self.target_size}",
                 f"pieces {len(self.pieces)}"]
        for piece_id, piece in enumerate(self.pieces):
            if piece_id in SPECIAL_NAMES:
                lines.append(SPECIAL_NAMES[piece_id])
            else:
                lines.append("hex:" + piece.hex())
        lines.append(f"merges {len(self.merges)}")
        lines.extend(f"{left} {right}" for left, right in self.merges)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("DPXVOCAB 1"):
            raise TokenizerError(f"{path}: not a vocab file")
        target_size = int(lines[0].split("target_size=")[1])
        n_pieces = int(lines[1].split()[1])
        pieces = []
        for line in lines[2:2 + n_pieces]:
            pieces.append(b"" if line.startswith("<") else bytes.fromhex(line[4:]))
        merge_header = lines[2 + n_pieces]
        n_merges = int(merge_header.split()[1])
        merges = []
        for line in lines[3 + n_pieces:3 + n_pieces + n_merges]:
            left, right = line.split()
            merges.append((int(left), int(right)))
        return cls(pieces=tuple(pieces), merges=tuple(merges), target_size=target_size)


def _base_pieces() -> list[bytes]:
    return [b"", b"", b""] + [bytes([b]) for b in range(256)]


def train_bpe(corpus: str, target_size: int = 32000) -> Vocab:
    """Greedy highest-frequency pair merging over whitespace-delimited words.

    Ties break toward the lexicographically smallest (left, right) byte
    strings; training stops at target_size or when no pair repeats.
    """
    if not corpus.strip():
        raise TokenizerError("empty corpus")
    if target_size < BASE_VOCAB_SIZE:
        raise TokenizerError(
            f"target_size {target_size} below base alphabet size {BASE_VOCAB_SIZE}")

    word_freqs = Counter(corpus.split())
    words = {w: [b + N_SPECIALS for b in w.encode("utf-8")] for w in word_freqs}
    pieces = _base_pieces()
    merges: list[tuple[int, int]] = []

    while len(pieces) < target_size:
        pair_freqs: Counter = Counter()
        for w, ids in words.items():
            freq = word_freqs[w]
            for pair in zip(ids, ids[1:]):
                pair_freqs[pair] += freq
        if not pair_freqs:
            break
        best_freq = max(pair_freqs.values())
        if best_freq < 2:
            break
        best = min((pair for pair, f in pair_freqs.items() if f == best_freq),
                   key=lambda p: (pieces[p[0]], pieces[p[1]]))
        new_id = len(pieces)
        pieces.append(pieces[best[0]] + pieces[best[1]])
        merges.append(best)
        for w, ids in words.items():
            words[w] = _apply_merge(ids, best, new_id)

    return Vocab(pieces=tuple(pieces), merges=tuple(merges), target_size=target_size)


def _apply_merge(ids: list[int], pair: tuple[int, int], new_id: int) -> list[int]:
    out = []
    i = 0
    while i < len(ids):
        if i + 1 < len(ids) and ids[i] == pair[0] and ids[i + 1] == pair[1]:
            out.append(new_id)
            i += 2
        else:
            out.append(ids[i])
            i += 1
    return out


def encode_word(word: str, vocab: Vocab,
                ranks: dict[tuple[int, int], int] | None = None) -> list[int]:
    """Apply merges in learned order to one whitespace-free word."""
    if ranks is None:
        ranks = vocab.merge_ranks()
    ids = [b + N_SPECIALS for b in word.encode("utf-8")]
    while len(ids) > 1:
        best_rank = None
        best_pos = -1
        for i in range(len(ids) - 1):
            rank = ranks.get((ids[i], ids[i + 1]))
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank, best_pos = rank, i
        if best_rank is None:
            break
        ids = ids[:best_pos] + [BASE_VOCAB_SIZE + best_rank] + ids[best_pos + 2:]
    return ids


def encode(text: str, vocab: Vocab) -> list[int]:
    ranks = vocab.merge_ranks()
    out: list[int] = []
    for run in _RUNS.findall(text):
        if run.isspace():
            out.extend(b + N_SPECIALS for b in run.encode("utf-8"))
        else:
            out.extend(encode_word(run, vocab, ranks))
    return out


def decode(ids, vocab: Vocab) -> str:
    chunks = []
    for i in ids:
        i = int(i)
        if not 0 <= i < vocab.size:
            raise TokenizerError(f"token id {i} out of range [0, {vocab.size})")
        chunks.append(vocab.pieces[i])
    return b"".join(chunks).decode("utf-8", errors="replace")


@dataclass(frozen=True)
class FragmentationStats:
    tokens_per_word: float
    tokens_per_char: float
    n_words: int


def fragmentation(corpus: str, vocab: Vocab) -> FragmentationStats:
    """Mean subword tokens per whitespace word and per word character."""
    words = corpus.split()
    if not words:
        raise TokenizerError("empty corpus")
    ranks = vocab.merge_ranks()
    n_tokens = 0
    n_chars = 0
    for w in words:
        n_tokens += len(encode_word(w, vocab, ranks))
        n_chars += len(w)
    return FragmentationStats(
        tokens_per_word=n_tokens / len(words),
        tokens_per_char=n_tokens / n_chars,
        n_words=len(words),
    )


# --- checkpoint migration -----------------------------------------------------


class TensorRole(Enum):
    TEXT_EMBED_TEMPORAL = "TEXT_EMBED_TEMPORAL"
    TEXT_EMBED_DEPTH = "TEXT_EMBED_DEPTH"
    TEXT_LINEAR = "TEXT_LINEAR"
    AUDIO = "AUDIO"
    OTHER = "OTHER"


TEXT_ROLES = {TensorRole.TEXT_EMBED_TEMPORAL, TensorRole.TEXT_EMBED_DEPTH,
              TensorRole.TEXT_LINEAR}


@dataclass(frozen=True)
class TensorInfo:
    name: str
    shape: tuple[int, ...]
    role: TensorRole
    checksum: int

    def to_dict(self) -> dict:
        return {"name": self.name, "shape": list(self.shape),
                "role": self.role.value, "checksum": self.checksum}

    @classmethod
    def from_dict(cls, d: dict) -> "TensorInfo":
        return cls(name=d["name"], shape=tuple(d["shape"]),
                   role=TensorRole(d["role"]), checksum=d["checksum"])


@dataclass(frozen=True)
class TensorManifest:
    entries: tuple[TensorInfo, ...]

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ManifestError("tensor names must be unique")
        for e in self.entries:
            if any(d <= 0 for d in e.shape):
                raise ManifestError(f"tensor {e.name!r} has non-positive shape {e.shape}")

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps(e.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TensorManifest":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entries.append(TensorInfo.from_dict(json.loads(line)))
        return cls(entries=tuple(entries))


@dataclass(frozen=True)
class MigrationAction:
    kind: str                      # "COPY" or "REINIT"
    new_shape: tuple[int, ...] | None = None
    init_mean: float = REINIT_MEAN
    init_std: float = REINIT_STD


@dataclass(frozen=True)
class MigrationPlan:
    old_vocab_size: int
    new_vocab_size: int
    actions: dict[str, MigrationAction]

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"old_vocab_size": self.old_vocab_size,
                                 "new_vocab_size": self.new_vocab_size}) + "\n")
            for name, action in self.actions.items():
                record = {"name": name, "kind": action.kind}
                if action.kind == "REINIT":
                    record["new_shape"] = list(action.new_shape)
                    record["init"] = {"dist": "normal", "mean": action.init_mean,
                                      "std": action.init_std}
                fh.write(json.dumps(record) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MigrationPlan":
        with open(path, encoding="utf-8") as fh:
            lines = [json.loads(l) for l in fh if l.strip()]
        head = lines[0]
        actions = {}
        for d in lines[1:]:
            if d["kind"] == "REINIT":
                actions[d["name"]] = MigrationAction(
                    kind="REINIT", new_shape=tuple(d["new_shape"]),
                    init_mean=d["init"]["mean"], init_std=d["init"]["std"])
            else:
                actions[d["name"]] = MigrationAction(kind="COPY")
        return cls(old_vocab_size=head["old_vocab_size"],
                   new_vocab_size=head["new_vocab_size"], actions=actions)


def make_migration_plan(manifest: TensorManifest, old_vocab_size: int,
                        new_vocab: Vocab | int, force: bool = False) -> MigrationPlan:
    """COPY everything except the text-vocabulary-dependent tensors.

    Embedding tables carry the vocab on axis 0; the text linear projection
    carries it on the last axis (weights are stored input-major, so logits
    are h @ W + b). Same-size replacement reinitializes only when forced.
    """
    new_size = new_vocab.size if isinstance(new_vocab, Vocab) else int(new_vocab)
    same_size = new_size == old_vocab_size
    actions: dict[str, MigrationAction] = {}
    for e in manifest.entries:
        if e.role not in TEXT_ROLES or (same_size and not force):
            actions[e.name] = MigrationAction(kind="COPY")
            continue
        if e.role in (TensorRole.TEXT_EMBED_TEMPORAL, TensorRole.TEXT_EMBED_DEPTH):
            if e.shape[0] != old_vocab_size:
                raise ManifestError(
                    f"{e.name}: embedding axis 0 is {e.shape[0]}, expected {old_vocab_size}")
            new_shape = (new_size,) + e.shape[1:]
        else:  # TEXT_LINEAR
            if e.shape[-1] != old_vocab_size:
                raise ManifestError(
                    f"{e.name}: output axis is {e.shape[-1]}, expected {old_vocab_size}")
            new_shape = e.shape[:-1] + (new_size,)
        actions[e.name] = MigrationAction(kind="REINIT", new_shape=new_shape)
    return MigrationPlan(old_vocab_size=old_vocab_size, new_vocab_size=new_size,
                         actions=actions)


def apply_migration_plan(plan: MigrationPlan, tensors: dict[str, np.ndarray],
                         seed: int) -> dict[str, np.ndarray]:
    """COPY tensors pass through untouched; REINIT tensors are drawn
    normal(mean, std) from a per-tensor substream of the run seed."""
    out: dict[str, np.ndarray] = {}
    for name, action in plan.actions.items():
        if name not in tensors:
            raise ManifestError(f"plan names tensor {name!r} missing from checkpoint")
        if action.kind == "COPY":
            out[name] = tensors[name]
        else:
            rng = substream_rng(seed, f"reinit:{name}")
            fresh = rng.normal(action.init_mean, action.init_std, size=action.new_shape)
            out[name] = fresh.astype(tensors[name].dtype)
    for name in tensors:
        if name not in plan.actions:
            raise ManifestError(f"checkpoint tensor {name!r} missing from plan")
    return out
