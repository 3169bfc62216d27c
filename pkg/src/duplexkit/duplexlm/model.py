"""Toy hierarchical duplex LM: a temporal transformer over 17-stream steps
feeding a depth transformer that emits the 16 audio tokens of the next step.

Pure numpy with hand-written backward passes (float64 throughout); the
matrix work rides on BLAS, so there is nothing here for numba to win.
Parameters live in a flat name -> array dict so checkpointing, migration
roles, and optimizer groups all key off names.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import DuplexkitError, substream_rng
from ..framebuilder import N_STREAMS, N_AUDIO_STREAMS
from ..tokenizer import TensorInfo, TensorManifest, TensorRole
from ..tensorstore import tensor_checksum

INIT_STD = 0.02
_NEG_INF = -1e30

# audio positions within a step follow stream order 1..16; codebook 1 of
# each speaker is the semantic position
SEMANTIC_POSITIONS = (0, 8)


class ModelError(DuplexkitError):
    pass


@dataclass(frozen=True)
class ToyDuplexConfig:
    d_model: int = 64
    temporal_layers: int = 2
    heads: int = 2
    d_depth: int = 32
    depth_layers: int = 1
    context_steps: int = 128
    text_vocab: int = 512
    audio_vocab: int = 64
    n_codebooks: int = 8
    n_streams: int = N_STREAMS

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")
        if self.d_depth % self.heads:
            raise ValueError("d_depth must be divisible by heads")
        for name in ("d_model", "temporal_layers", "heads", "d_depth", "depth_layers",
                     "context_steps", "text_vocab", "audio_vocab"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.context_steps > 128:
            raise ValueError("context_steps capped at 128 at desk scale")


# --- primitive layers with explicit caches ----------------------------------

def _linear_fwd(x, w, b):
    return x @ w + b


def _linear_bwd(dy, x, w):
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dw = x2.T @ dy2
    db = dy2.sum(axis=0)
    dx = dy @ w.T
    return dx, dw, db


def _layernorm_fwd(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _layernorm_bwd(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    mean1 = dxhat.mean(axis=-1, keepdims=True)
    mean2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - mean1 - xhat * mean2)
    return dx, dg, db


_GELU_C = math.sqrt(2.0 / math.pi)


def _gelu_fwd(x):
    u = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t), (x, t)


def _gelu_bwd(dy, cache):
    x, t = cache
    du = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def _softmax(x, axis=-1):
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _attention_fwd(x, p, prefix, n_heads):
    """Pre-LN causal multi-head self-attention block input x: (..., T, d)."""
    *lead, T, d = x.shape
    dh = d // n_heads
    q = _linear_fwd(x, p[f"{prefix}.wq"], p[f"{prefix}.bq"])
    k = _linear_fwd(x, p[f"{prefix}.wk"], p[f"{prefix}.bk"])
    v = _linear_fwd(x, p[f"{prefix}.wv"], p[f"{prefix}.bv"])

    def split(a):
        return a.reshape(*lead, T, n_heads, dh).swapaxes(-3, -2)  # (..., H, T, dh)

    qh, kh, vh = split(q), split(k), split(v)
    scale = 1.0 / math.sqrt(dh)
    scores = (qh @ kh.swapaxes(-1, -2)) * scale
    mask = np.triu(np.ones((T, T), dtype=bool), k=1)
    scores = np.where(mask, _NEG_INF, scores)
    probs = _softmax(scores)
    ctx = probs @ vh
    merged = ctx.swapaxes(-3, -2).reshape(*lead, T, d)
    out = _linear_fwd(merged, p[f"{prefix}.wo"], p[f"{prefix}.bo"])
    return out, (x, qh, kh, vh, probs, merged, scale)


def _attention_bwd(dout, p, prefix, cache, grads):
    x, qh, kh, vh, probs, merged, scale = cache
    *lead, T, d = x.shape
    n_heads = qh.shape[-3]
    dh = d // n_heads

    dmerged, dwo, dbo = _linear_bwd(dout, merged, p[f"{prefix}.wo"])
    grads[f"{prefix}.wo"] += dwo
    grads[f"{prefix}.bo"] += dbo

    dctx = dmerged.reshape(*lead, T, n_heads, dh).swapaxes(-3, -2)
    dprobs = dctx @ vh.swapaxes(-1, -2)
    dvh = probs.swapaxes(-1, -2) @ dctx
    dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
    dqh = (dscores @ kh) * scale
    dkh = (dscores.swapaxes(-1, -2) @ qh) * scale

    def merge(a):
        return a.swapaxes(-3, -2).reshape(*lead, T, d)

    dq, dk, dv = merge(dqh), merge(dkh), merge(dvh)
    dx = np.zeros_like(x)
    for dy, tag in ((dq, "q"), (dk, "k"), (dv, "v")):
        dxi, dw, db = _linear_bwd(dy, x, p[f"{prefix}.w{tag}"])
        grads[f"{prefix}.w{tag}"] += dw
        grads[f"{prefix}.b{tag}"] += db
        dx += dxi
    return dx


def _block_fwd(x, p, prefix, n_heads):
    n1, c_ln1 = _layernorm_fwd(x, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    attn, c_attn = _attention_fwd(n1, p, f"{prefix}.attn", n_heads)
    x1 = x + attn
    n2, c_ln2 = _layernorm_fwd(x1, p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])
    h1 = _linear_fwd(n2, p[f"{prefix}.mlp.w1"], p[f"{prefix}.mlp.b1"])
    a1, c_gelu = _gelu_fwd(h1)
    h2 = _linear_fwd(a1, p[f"{prefix}.mlp.w2"], p[f"{prefix}.mlp.b2"])
    out = x1 + h2
    return out, (c_ln1, c_attn, x1, c_ln2, n2, c_gelu, a1)


def _block_bwd(dout, p, prefix, cache, grads):
    c_ln1, c_attn, x1, c_ln2, n2, c_gelu, a1 = cache
    da1, dw2, db2 = _linear_bwd(dout, a1, p[f"{prefix}.mlp.w2"])
    grads[f"{prefix}.mlp.w2"] += dw2
    grads[f"{prefix}.mlp.b2"] += db2
    dh1 = _gelu_bwd(da1, c_gelu)
    dn2, dw1, db1 = _linear_bwd(dh1, n2, p[f"{prefix}.mlp.w1"])
    grads[f"{prefix}.mlp.w1"] += dw1
    grads[f"{prefix}.mlp.b1"] += db1
    dx1, dg2, dbeta2 = _layernorm_bwd(dn2, p[f"{prefix}.ln2.g"], c_ln2)
    grads[f"{prefix}.ln2.g"] += dg2
    grads[f"{prefix}.ln2.b"] += dbeta2
    dx1 = dx1 + dout
    dn1 = _attention_bwd(dx1, p, f"{prefix}.attn", c_attn, grads)
    dx, dg1, dbeta1 = _layernorm_bwd(dn1, p[f"{prefix}.ln1.g"], c_ln1)
    grads[f"{prefix}.ln1.g"] += dg1
    grads[f"{prefix}.ln1.b"] += dbeta1
    return dx + dx1


# --- the model ---------------------------------------------------------------

class DuplexModel:
    """Holds the parameter dict and implements forward/backward.

    Token grids are (batch, 17, steps); the model predicts step t from steps
    < t, so targets are the inputs shifted one step left. Within a step the
    depth transformer runs over 16 positions in stream order 1..16, each
    conditioned on a projection of the temporal hidden state; position 0
    additionally sees the step's (teacher-forced or sampled) text token via
    its own embedding table, positions k >= 1 see audio position k-1.
    """

    def __init__(self, config: ToyDuplexConfig, seed: int = 0):
        self.config = config
        self.params = _init_params(config, substream_rng(seed, "model.init"))

    # -- parameter bookkeeping

    def param_group(self, name: str) -> str:
        return "depth" if name.startswith("depth.") else "temporal"

    def tensor_role(self, name: str) -> TensorRole:
        if name == "embed.text":
            return TensorRole.TEXT_EMBED_TEMPORAL
        if name == "depth.embed.text":
            return TensorRole.TEXT_EMBED_DEPTH
        if name.startswith("text_linear."):
            return TensorRole.TEXT_LINEAR
        if name.startswith("embed.audio") or name == "depth.embed.audio" \
                or name.startswith("depth.out."):
            return TensorRole.AUDIO
        return TensorRole.OTHER

    def manifest(self) -> TensorManifest:
        entries = tuple(
            TensorInfo(name=name, shape=arr.shape, role=self.tensor_role(name),
                       checksum=tensor_checksum(arr))
            for name, arr in self.params.items())
        return TensorManifest(entries=entries)

    def load_params(self, tensors: dict[str, np.ndarray]) -> None:
        for name, arr in self.params.items():
            if name not in tensors:
                raise ModelError(f"checkpoint missing tensor {name!r}")
            if tensors[name].shape != arr.shape:
                raise ModelError(f"tensor {name!r}: checkpoint shape {tensors[name].shape} "
                                 f"!= model shape {arr.shape}")
            self.params[name] = np.asarray(tensors[name], dtype=np.float64).copy()

    # -- forward / backward

    def _validate(self, tokens: np.ndarray) -> np.ndarray:
        tokens = np.asarray(tokens)
        if tokens.ndim == 2:
            tokens = tokens[np.newaxis]
        if tokens.ndim != 3 or tokens.shape[1] != self.config.n_streams:
            raise ModelError(f"tokens must be (batch, {self.config.n_streams}, steps)")
        text = tokens[:, 0]
        if text.min(initial=0) < 0 or text.max(initial=0) >= self.config.text_vocab:
            raise ModelError("text token id out of range")
        audio = tokens[:, 1:]
        if audio.min(initial=0) < 0 or audio.max(initial=0) > self.config.audio_vocab:
            raise ModelError("audio token id out of range")
        return tokens

    def temporal_hidden(self, inputs: np.ndarray):
        """inputs: (B, 17, T) -> per-step hidden z (B, T, d) + cache."""
        p = self.params
        cfg = self.config
        B, _, T = inputs.shape
        if T > p["embed.pos"].shape[0]:
            raise ModelError(f"sequence of {T} steps exceeds context {p['embed.pos'].shape[0]}")
        x = p["embed.text"][inputs[:, 0]]
        for s in range(1, cfg.n_streams):
            x = x + p[f"embed.audio{s}"][inputs[:, s]]
        x = x + p["embed.pos"][:T]
        block_caches = []
        for i in range(cfg.temporal_layers):
            x, cache = _block_fwd(x, p, f"temporal.{i}", cfg.heads)
            block_caches.append(cache)
        z, c_lnf = _layernorm_fwd(x, p["temporal.ln_f.g"], p["temporal.ln_f.b"])
        return z, (inputs, block_caches, c_lnf)

    def temporal_backward(self, dz, cache, grads):
        p = self.params
        cfg = self.config
        inputs, block_caches, c_lnf = cache
        dx, dg, db = _layernorm_bwd(dz, p["temporal.ln_f.g"], c_lnf)
        grads["temporal.ln_f.g"] += dg
        grads["temporal.ln_f.b"] += db
        for i in reversed(range(cfg.temporal_layers)):
            dx = _block_bwd(dx, p, f"temporal.{i}", block_caches[i], grads)
        T = inputs.shape[2]
        grads["embed.pos"][:T] += dx.sum(axis=0)
        np.add.at(grads["embed.text"], inputs[:, 0], dx)
        for s in range(1, cfg.n_streams):
            np.add.at(grads[f"embed.audio{s}"], inputs[:, s], dx)

    def depth_hidden(self, z_flat: np.ndarray, text_tokens: np.ndarray,
                     audio_prefix: np.ndarray):
        """z_flat: (N, d); text_tokens: (N,); audio_prefix: (N, k) with k <= 15.

        Returns hidden states (N, k+1, d_depth) + cache; position j's hidden
        feeds the logits for audio position j.
        """
        p = self.params
        cfg = self.config
        N, k = audio_prefix.shape
        n_pos = k + 1
        base = _linear_fwd(z_flat, p["depth.in_proj.w"], p["depth.in_proj.b"])
        x = np.repeat(base[:, np.newaxis, :], n_pos, axis=1)
        x = x + p["depth.embed.pos"][:n_pos]
        x[:, 0, :] += p["depth.embed.text"][text_tokens]
        if k:
            x[:, 1:, :] += p["depth.embed.audio"][audio_prefix]
        block_caches = []
        for i in range(cfg.depth_layers):
            x, cache = _block_fwd(x, p, f"depth.{i}", cfg.heads)
            block_caches.append(cache)
        h, c_lnf = _layernorm_fwd(x, p["depth.ln_f.g"], p["depth.ln_f.b"])
        return h, (z_flat, text_tokens, audio_prefix, base, block_caches, c_lnf)

    def depth_backward(self, dh, cache, grads):
        p = self.params
        cfg = self.config
        z_flat, text_tokens, audio_prefix, base, block_caches, c_lnf = cache
        dx, dg, db = _layernorm_bwd(dh, p["depth.ln_f.g"], c_lnf)
        grads["depth.ln_f.g"] += dg
        grads["depth.ln_f.b"] += db
        for i in reversed(range(cfg.depth_layers)):
            dx = _block_bwd(dx, p, f"depth.{i}", block_caches[i], grads)
        n_pos = dx.shape[1]
        grads["depth.embed.pos"][:n_pos] += dx.sum(axis=0)
        np.add.at(grads["depth.embed.text"], text_tokens, dx[:, 0, :])
        if n_pos > 1:
            np.add.at(grads["depth.embed.audio"], audio_prefix, dx[:, 1:, :])
        dbase = dx.sum(axis=1)
        dz, dw, dbp = _linear_bwd(dbase, z_flat, p["depth.in_proj.w"])
        grads["depth.in_proj.w"] += dw
        grads["depth.in_proj.b"] += dbp
        return dz

    def forward(self, tokens: np.ndarray):
        """Teacher-forced pass over (B, 17, T) grids, T >= 2.

        Returns (text_logits (B,T-1,Vt), audio_logits (B,T-1,16,Va), cache);
        logits at position t predict the tokens of step t+1.
        """
        tokens = self._validate(tokens)
        if tokens.shape[2] < 2:
            raise ModelError("need at least 2 steps to form a prediction target")
        p = self.params
        inputs = tokens[:, :, :-1]
        targets = tokens[:, :, 1:]
        B, _, Tp = inputs.shape

        z, t_cache = self.temporal_hidden(inputs)
        text_logits = _linear_fwd(z, p["text_linear.w"], p["text_linear.b"])

        z_flat = z.reshape(B * Tp, -1)
        text_t = targets[:, 0].reshape(-1)
        audio_t = targets[:, 1:].transpose(0, 2, 1).reshape(B * Tp, N_AUDIO_STREAMS)
        h, d_cache = self.depth_hidden(z_flat, text_t, audio_t[:, :-1])
        audio_logits = _linear_fwd(h, p["depth.out.w"], p["depth.out.b"])
        audio_logits = audio_logits.reshape(B, Tp, N_AUDIO_STREAMS, -1)

        cache = (tokens, z, t_cache, z_flat, h, d_cache, B, Tp)
        return text_logits, audio_logits, cache

    def backward(self, dtext_logits: np.ndarray, daudio_logits: np.ndarray, cache):
        """Exact analytic gradients for every parameter, as a name -> array dict."""
        p = self.params
        tokens, z, t_cache, z_flat, h, d_cache, B, Tp = cache
        grads = {name: np.zeros_like(arr) for name, arr in p.items()}

        dh, dw, db = _linear_bwd(
            daudio_logits.reshape(B * Tp, N_AUDIO_STREAMS, -1), h, p["depth.out.w"])
        grads["depth.out.w"] += dw
        grads["depth.out.b"] += db
        dz_flat = self.depth_backward(dh, d_cache, grads)

        dz, dwt, dbt = _linear_bwd(dtext_logits, z, p["text_linear.w"])
        grads["text_linear.w"] += dwt
        grads["text_linear.b"] += dbt
        dz = dz + dz_flat.reshape(B, Tp, -1)

        self.temporal_backward(dz, t_cache, grads)
        return grads


def _init_params(cfg: ToyDuplexConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    p: dict[str, np.ndarray] = {}

    def normal(*shape):
        return rng.normal(0.0, INIT_STD, size=shape)

    p["embed.text"] = normal(cfg.text_vocab, cfg.d_model)
    for s in range(1, cfg.n_streams):
        p[f"embed.audio{s}"] = normal(cfg.audio_vocab + 1, cfg.d_model)
    p["embed.pos"] = normal(cfg.context_steps, cfg.d_model)
    for i in range(cfg.temporal_layers):
        _init_block(p, f"temporal.{i}", cfg.d_model, normal)
    p["temporal.ln_f.g"] = np.ones(cfg.d_model)
    p["temporal.ln_f.b"] = np.zeros(cfg.d_model)
    p["text_linear.w"] = normal(cfg.d_model, cfg.text_vocab)
    p["text_linear.b"] = np.zeros(cfg.text_vocab)

    p["depth.in_proj.w"] = normal(cfg.d_model, cfg.d_depth)
    p["depth.in_proj.b"] = np.zeros(cfg.d_depth)
    p["depth.embed.text"] = normal(cfg.text_vocab, cfg.d_depth)
    p["depth.embed.audio"] = normal(cfg.audio_vocab + 1, cfg.d_depth)
    p["depth.embed.pos"] = normal(N_AUDIO_STREAMS, cfg.d_depth)
    for i in range(cfg.depth_layers):
        _init_block(p, f"depth.{i}", cfg.d_depth, normal)
    p["depth.ln_f.g"] = np.ones(cfg.d_depth)
    p["depth.ln_f.b"] = np.zeros(cfg.d_depth)
    p["depth.out.w"] = normal(cfg.d_depth, cfg.audio_vocab)
    p["depth.out.b"] = np.zeros(cfg.audio_vocab)
    return p


def _init_block(p: dict, prefix: str, d: int, normal) -> None:
    p[f"{prefix}.ln1.g"] = np.ones(d)
    p[f"{prefix}.ln1.b"] = np.zeros(d)
    for tag in ("q", "k", "v", "o"):
        p[f"{prefix}.attn.w{tag}"] = normal(d, d)
        p[f"{prefix}.attn.b{tag}"] = np.zeros(d)
    p[f"{prefix}.ln2.g"] = np.ones(d)
    p[f"{prefix}.ln2.b"] = np.zeros(d)
    p[f"{prefix}.mlp.w1"] = normal(d, 4 * d)
    p[f"{prefix}.mlp.b1"] = np.zeros(4 * d)
    p[f"{prefix}.mlp.w2"] = normal(4 * d, d)
    p[f"{prefix}.mlp.b2"] = np.zeros(d)


# --- spec-level single-sequence views ----------------------------------------

def temporal_forward(model: DuplexModel, prefix: np.ndarray):
    """prefix: (17, t) -> (z (t, d), text logits (t, text_vocab)).

    z at position i is a function of steps <= i only; the logits row at
    position i scores the text token of step i+1.
    """
    prefix = np.asarray(prefix)
    if prefix.ndim != 2 or prefix.shape[1] < 1:
        raise ModelError("prefix must be (17, t) with t >= 1")
    model._validate(prefix[np.newaxis])
    z, _ = model.temporal_hidden(prefix[np.newaxis])
    logits = _linear_fwd(z, model.params["text_linear.w"], model.params["text_linear.b"])
    return z[0], logits[0]


def depth_forward(model: DuplexModel, z_s: np.ndarray, audio_prefix,
                  text_token: int) -> np.ndarray:
    """Logits for audio position k = len(audio_prefix), 0 <= k < 16.

    The text token of the step under generation conditions position 0 (its
    embedding table is one of the vocabulary-dependent tensors); audio
    prefix tokens condition positions 1..k.
    """
    audio_prefix = list(audio_prefix)
    k = len(audio_prefix)
    if k >= N_AUDIO_STREAMS:
        raise ModelError(f"audio prefix of {k} tokens: step already complete")
    z_flat = np.asarray(z_s, dtype=np.float64).reshape(1, -1)
    prefix = np.asarray(audio_prefix, dtype=np.int64).reshape(1, k)
    text = np.asarray([text_token], dtype=np.int64)
    h, _ = model.depth_hidden(z_flat, text, prefix)
    logits = _linear_fwd(h[:, -1, :], model.params["depth.out.w"], model.params["depth.out.b"])
    return logits[0]
