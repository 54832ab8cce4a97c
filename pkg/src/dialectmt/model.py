"""The translation network: multibranch transformer encoder with a word
segmentation embedding stitch, a length predictor, a parallel decoder, and a
tied-embedding translation predictor.

The feature dimension is split into ``n_branches`` independent slices; each
slice runs its own multi-head attention and feed-forward sublayers and the
slices are concatenated back, which divides the feed-forward multiply-adds
and parameters by the branch count. The same block family also serves the
autoregressive baseline (causal mask switched on).
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field, asdict
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CheckpointError, ConfigError, DimensionError, EmptyInputError
from .guard import guard as guard_text, unguard
from .textproc import (
    SegmentedSentence,
    Vocab,
    detokenize,
    preprocess,
    segment_greedy,
)

NEG_INF = -1e30
CHECKPOINT_MAGIC = b"DMTCK1\n"


@dataclass
class ModelConfig:
    """Hyperparameters; defaults follow the deployed small-model setup."""

    d_model: int = 300
    n_branches: int = 2
    n_heads: int = 2
    n_layers: int = 1
    d_seg: int = 16
    ffn_multiplier: int = 4
    max_len: int = 256
    length_offset_range: int = 20  # length predictor classifies offsets in [-K, K]
    vocab_size: int = 0
    model_type: str = "nat"  # "nat" or "at"
    seg_side: str = "encoder"  # where the boundary embedding is stitched
    collapse_repeats: bool = True

    def validate(self):
        if self.d_model % self.n_branches != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_branches {self.n_branches}")
        if (self.d_model // self.n_branches) % self.n_heads != 0:
            raise ConfigError(
                f"branch width {self.d_model // self.n_branches} not divisible "
                f"by n_heads {self.n_heads}")
        if self.n_layers < 1 or self.length_offset_range < 1:
            raise ConfigError("n_layers and length_offset_range must be >= 1")
        if self.model_type not in ("nat", "at"):
            raise ConfigError(f"unknown model_type {self.model_type!r}")
        if self.seg_side not in ("encoder", "decoder"):
            raise ConfigError(f"unknown seg_side {self.seg_side!r}")
        if self.vocab_size < 5:
            raise ConfigError("vocab_size must cover the reserved tokens")
        return self

    @property
    def d_branch(self) -> int:
        return self.d_model // self.n_branches


class ModelParams:
    """Named weight tensors in a fixed creation order."""

    def __init__(self, tensors: dict[str, Tensor], config: ModelConfig):
        self.tensors = tensors
        self.config = config

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "ModelParams":
        return ModelParams(
            {k: Tensor(v.data.copy(), requires_grad=True) for k, v in self.items()},
            self.config)


def _glorot(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    config.validate()
    rng = np.random.default_rng(seed)
    db = config.d_branch
    dff = config.ffn_multiplier * db
    t: dict[str, Tensor] = {}

    def w(name, arr):
        t[name] = Tensor(arr, requires_grad=True)

    w("emb", rng.normal(0.0, config.d_model ** -0.5,
                        size=(config.vocab_size, config.d_model)))
    w("seg_emb", rng.normal(0.0, config.d_seg ** -0.5, size=(2, config.d_seg)))
    w("stitch.w", _glorot(rng, config.d_model + config.d_seg, config.d_model))
    w("stitch.b", np.zeros(config.d_model))

    def attention_block(prefix):
        for name in ("wq", "wk", "wv", "wo"):
            w(f"{prefix}.{name}", _glorot(rng, db, db))
        for name in ("bq", "bk", "bv", "bo"):
            w(f"{prefix}.{name}", np.zeros(db))

    def branch_block(prefix, cross: bool):
        attention_block(f"{prefix}.self")
        w(f"{prefix}.ln1.g", np.ones(db))
        w(f"{prefix}.ln1.b", np.zeros(db))
        if cross:
            attention_block(f"{prefix}.cross")
            w(f"{prefix}.lnc.g", np.ones(db))
            w(f"{prefix}.lnc.b", np.zeros(db))
        w(f"{prefix}.ffn.w1", _glorot(rng, db, dff))
        w(f"{prefix}.ffn.b1", np.zeros(dff))
        w(f"{prefix}.ffn.w2", _glorot(rng, dff, db))
        w(f"{prefix}.ffn.b2", np.zeros(db))
        w(f"{prefix}.ln2.g", np.ones(db))
        w(f"{prefix}.ln2.b", np.zeros(db))

    for layer in range(config.n_layers):
        for b in range(config.n_branches):
            branch_block(f"enc.l{layer}.b{b}", cross=False)
    for layer in range(config.n_layers):
        for b in range(config.n_branches):
            branch_block(f"dec.l{layer}.b{b}", cross=True)
    if config.model_type == "nat":
        k = config.length_offset_range
        w("len.w", _glorot(rng, config.d_model, 2 * k + 1))
        w("len.b", np.zeros(2 * k + 1))
    return ModelParams(t, config)


@lru_cache(maxsize=8)
def _positional_encoding(max_len: int, d_model: int) -> np.ndarray:
    pos = np.arange(max_len)[:, None]
    dim = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (dim // 2)) / d_model)
    pe = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return pe


@dataclass
class EncoderState:
    states: Tensor            # [S x d_model]
    mask: np.ndarray          # bool [S], True at real (unpadded) positions
    pooled: Tensor            # [1 x d_model], mean over unpadded rows
    truncated: bool = False


@dataclass
class DecodeOutput:
    logits: Tensor            # [T x vocab]
    cross_attention: Tensor   # [T x S], head- and branch-averaged
    predicted_ids: list[int] = field(default_factory=list)


@dataclass
class TranslationResult:
    text: str
    token_ids: list[int]
    predicted_length: int
    cross_attention: np.ndarray | None = None
    truncated: bool = False


def _attention(q_in, kv_in, params, prefix, n_heads, mask_bias, collect=None):
    """Multi-head scaled dot-product attention over one branch slice."""
    q = ad.add(ad.matmul(q_in, params[f"{prefix}.wq"]), params[f"{prefix}.bq"])
    k = ad.add(ad.matmul(kv_in, params[f"{prefix}.wk"]), params[f"{prefix}.bk"])
    v = ad.add(ad.matmul(kv_in, params[f"{prefix}.wv"]), params[f"{prefix}.bv"])
    dh = q.shape[1] // n_heads
    ctx_parts = []
    for h in range(n_heads):
        lo, hi = h * dh, (h + 1) * dh
        scores = ad.scale(ad.matmul(ad.slice_cols(q, lo, hi),
                                    ad.transpose(ad.slice_cols(k, lo, hi))),
                          1.0 / math.sqrt(dh))
        if mask_bias is not None:
            scores = ad.add(scores, mask_bias)
        attn = ad.softmax_rows(scores)
        if collect is not None:
            collect.append(attn)
        ctx_parts.append(ad.matmul(attn, ad.slice_cols(v, lo, hi)))
    ctx = ctx_parts[0] if len(ctx_parts) == 1 else ad.concat_cols(ctx_parts)
    return ad.add(ad.matmul(ctx, params[f"{prefix}.wo"]), params[f"{prefix}.bo"])


def _ffn(x, params, prefix):
    h = ad.relu(ad.add(ad.matmul(x, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
    return ad.add(ad.matmul(h, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def _sublayer(x, out, params, prefix):
    return ad.layer_norm(ad.add(x, out), params[f"{prefix}.g"], params[f"{prefix}.b"])


def multibranch_self_block(x, params, prefix, config: ModelConfig, mask_bias):
    """One encoder block: per branch slice, self-attention then FFN, each with
    residual + layer norm; branch outputs re-concatenated."""
    db = config.d_branch
    parts = []
    for b in range(config.n_branches):
        pb = f"{prefix}.b{b}"
        xb = ad.slice_cols(x, b * db, (b + 1) * db) if config.n_branches > 1 else x
        h1 = _sublayer(xb, _attention(xb, xb, params, f"{pb}.self",
                                      config.n_heads, mask_bias),
                       params, f"{pb}.ln1")
        h2 = _sublayer(h1, _ffn(h1, params, f"{pb}.ffn"), params, f"{pb}.ln2")
        parts.append(h2)
    return parts[0] if len(parts) == 1 else ad.concat_cols(parts)


def multibranch_decoder_block(x, enc: EncoderState, params, prefix,
                              config: ModelConfig, self_bias, cross_bias,
                              collect=None):
    """Decoder block: branch-wise self-attention, cross-attention to the
    matching encoder slice, then FFN."""
    db = config.d_branch
    parts = []
    for b in range(config.n_branches):
        pb = f"{prefix}.b{b}"
        if config.n_branches > 1:
            xb = ad.slice_cols(x, b * db, (b + 1) * db)
            eb = ad.slice_cols(enc.states, b * db, (b + 1) * db)
        else:
            xb, eb = x, enc.states
        h1 = _sublayer(xb, _attention(xb, xb, params, f"{pb}.self",
                                      config.n_heads, self_bias),
                       params, f"{pb}.ln1")
        h2 = _sublayer(h1, _attention(h1, eb, params, f"{pb}.cross",
                                      config.n_heads, cross_bias, collect=collect),
                       params, f"{pb}.lnc")
        h3 = _sublayer(h2, _ffn(h2, params, f"{pb}.ffn"), params, f"{pb}.ln2")
        parts.append(h3)
    return parts[0] if len(parts) == 1 else ad.concat_cols(parts)


def _key_mask_bias(mask: np.ndarray, n_rows: int) -> np.ndarray | None:
    if mask.all():
        return None
    bias = np.where(mask, 0.0, NEG_INF)
    return np.broadcast_to(bias, (n_rows, mask.size)).copy()


def encode(sentence: SegmentedSentence, params: ModelParams,
           mask: np.ndarray | None = None) -> EncoderState:
    """Embed, stitch in boundary flags, and run the encoder stack.

    ``mask`` marks real positions (True); trailing padding does not leak into
    unpadded outputs or the pooled state. Over-length input is truncated and
    flagged.
    """
    config = params.config
    ids = list(sentence.ids)
    flags = list(sentence.boundary_flags)
    truncated = False
    if len(ids) > config.max_len:
        ids, flags = ids[:config.max_len], flags[:config.max_len]
        truncated = True
    if not ids:
        raise EmptyInputError("encode: empty sentence")
    if mask is None:
        mask = np.ones(len(ids), dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)[:len(ids)]
    if not mask.any():
        raise EmptyInputError("encode: no unpadded positions")

    x = ad.embedding(params["emb"], ids)
    if config.seg_side == "encoder":
        seg = ad.embedding(params["seg_emb"], flags)
        x = ad.add(ad.matmul(ad.concat_cols([x, seg]), params["stitch.w"]),
                   params["stitch.b"])
    x = ad.add(x, _positional_encoding(config.max_len, config.d_model)[:len(ids)])
    bias = _key_mask_bias(mask, len(ids))
    for layer in range(config.n_layers):
        x = multibranch_self_block(x, params, f"enc.l{layer}", config, bias)
    pool_w = (mask / mask.sum()).reshape(1, -1)
    pooled = ad.matmul(pool_w, x)
    return EncoderState(states=x, mask=mask, pooled=pooled, truncated=truncated)


def predict_length(enc: EncoderState, params: ModelParams) -> int:
    """Classify a length offset in [-K, K]; ties prefer the smaller |offset|."""
    config = params.config
    k = config.length_offset_range
    logits = length_logits(enc, params).data[0]
    order = sorted(range(2 * k + 1), key=lambda c: (-logits[c], abs(c - k)))
    delta = order[0] - k
    src_len = int(enc.mask.sum())
    return int(np.clip(src_len + delta, 1, config.max_len))


def length_logits(enc: EncoderState, params: ModelParams) -> Tensor:
    return ad.add(ad.matmul(enc.pooled, params["len.w"]), params["len.b"])


def init_decoder_inputs(enc: EncoderState, tgt_len: int,
                        config: ModelConfig) -> Tensor:
    """Uniform copy: decoder slot t receives encoder state floor(t*S/T)."""
    if not (1 <= tgt_len <= config.max_len):
        raise DimensionError(f"target length {tgt_len} outside [1, {config.max_len}]")
    src_len = int(enc.mask.sum())
    idx = (np.arange(tgt_len) * src_len) // tgt_len
    return ad.embedding(enc.states, idx)


def _average_attention(collected) -> Tensor:
    total = collected[0]
    for a in collected[1:]:
        total = ad.add(total, a)
    return ad.scale(total, 1.0 / len(collected))


def decode_parallel(dec_inputs: Tensor, enc: EncoderState,
                    params: ModelParams) -> DecodeOutput:
    """Run the parallel decoder; no causal mask, one pass for all positions.

    The recorded cross-attention is the head- and branch-average of the final
    layer, so its rows sum to 1 over unpadded source positions.
    """
    config = params.config
    t_len = dec_inputs.shape[0]
    x = ad.add(dec_inputs, _positional_encoding(config.max_len, config.d_model)[:t_len])
    cross_bias = _key_mask_bias(enc.mask, t_len)
    collected: list = []
    for layer in range(config.n_layers):
        collect = collected if layer == config.n_layers - 1 else None
        x = multibranch_decoder_block(x, enc, params, f"dec.l{layer}", config,
                                      self_bias=None, cross_bias=cross_bias,
                                      collect=collect)
    logits = ad.matmul(x, ad.transpose(params["emb"]))
    cross = _average_attention(collected)
    return DecodeOutput(logits=logits, cross_attention=cross,
                        predicted_ids=list(np.argmax(logits.data, axis=1)))


def collapse_repeats(ids: list[int]) -> list[int]:
    """Drop the tail of every run of identical adjacent tokens."""
    out = []
    for i in ids:
        if not out or out[-1] != i:
            out.append(int(i))
    return out


def translate(text: str, params: ModelParams, vocab: Vocab, lexicon=frozenset(),
              patterns=None, collapse: bool | None = None,
              forced_length: int | None = None) -> TranslationResult:
    """Guard, preprocess, segment, encode, size the decoder, decode in one
    parallel pass, then restore the guarded spans."""
    config = params.config
    guarded = guard_text(text, patterns)
    clean = preprocess(guarded.guarded)
    if not clean:
        return TranslationResult(text="", token_ids=[], predicted_length=0)
    sent = segment_greedy(clean, lexicon, vocab)
    with ad.no_grad():
        enc = encode(sent, params)
        tgt_len = forced_length or predict_length(enc, params)
        dec_in = init_decoder_inputs(enc, tgt_len, config)
        out = decode_parallel(dec_in, enc, params)
    ids = out.predicted_ids
    do_collapse = config.collapse_repeats if collapse is None else collapse
    if do_collapse:
        ids = collapse_repeats(ids)
    translated = detokenize(ids, vocab)
    return TranslationResult(text=unguard(translated, guarded),
                             token_ids=ids,
                             predicted_length=tgt_len,
                             cross_attention=out.cross_attention.data,
                             truncated=enc.truncated)


def count_ffn_multadds(config: ModelConfig, seq_len: int) -> tuple[int, int]:
    """Exact FFN multiply-add counts: single-branch baseline vs multibranch.

    Both follow 2 x 4 N d^2, with d shrunk to d/n in each of the n branches,
    so the ratio is exactly n.
    """
    d, n = config.d_model, config.n_branches
    baseline = 2 * 4 * seq_len * d * d
    multibranch = 2 * 4 * seq_len * (d // n) ** 2 * n
    return baseline, multibranch


def count_ffn_params(config: ModelConfig) -> tuple[int, int]:
    """FFN weight counts (biases excluded): baseline 2*4*d^2 vs per-branch."""
    d, n = config.d_model, config.n_branches
    return 2 * 4 * d * d, 2 * 4 * (d // n) ** 2 * n


def save_checkpoint(params: ModelParams, path):
    """Binary layout: magic, version u32, config JSON block, then per-weight
    records of (name, ndim, dims, row-major float64 payload)."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", 1))
    cfg = json.dumps(asdict(params.config), sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<I", len(params.tensors)))
    for name, tensor in params.items():
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", tensor.data.ndim))
        for dim in tensor.data.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path, expect_config: ModelConfig | None = None) -> ModelParams:
    with open(path, "rb") as f:
        raw = f.read()
    buf = io.BytesIO(raw)

    def take(n: int) -> bytes:
        chunk = buf.read(n)
        if len(chunk) != n:
            raise CheckpointError(f"truncated checkpoint {path}")
        return chunk

    if take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a model checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != 1:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<I", take(4))
    config = ModelConfig(**json.loads(take(cfg_len).decode("utf-8"))).validate()
    if expect_config is not None and asdict(config) != asdict(expect_config):
        raise CheckpointError("checkpoint config does not match the expected config")
    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, Tensor] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack("<" + "I" * ndim, take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape)
        tensors[name] = Tensor(data.copy(), requires_grad=True)
    if buf.read(1):
        raise CheckpointError(f"trailing bytes in checkpoint {path}")
    return ModelParams(tensors, config)
