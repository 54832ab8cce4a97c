"""Autoregressive baseline sharing the encoder and decoder block family.

The decoder runs with a strictly causal self-attention mask and emits one
token per full decoder pass, which makes it the latency reference point and
the teacher for corpus augmentation.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptyInputError
from .model import (
    EncoderState,
    ModelConfig,
    ModelParams,
    NEG_INF,
    TranslationResult,
    _positional_encoding,
    encode,
    multibranch_decoder_block,
)
from .guard import guard as guard_text, unguard
from .textproc import BOS, EOS, Vocab, detokenize, preprocess, segment_greedy


def causal_bias(n: int) -> np.ndarray:
    """Additive mask: position t may attend to positions <= t only."""
    bias = np.full((n, n), NEG_INF)
    return np.triu(bias, k=1)


def decoder_forward(tgt_in_ids, enc: EncoderState, params: ModelParams) -> Tensor:
    """Causally masked decoder pass over the given input ids; returns logits."""
    config = params.config
    t_len = len(tgt_in_ids)
    x = ad.embedding(params["emb"], tgt_in_ids)
    x = ad.add(x, _positional_encoding(config.max_len, config.d_model)[:t_len])
    cross_bias = None
    if not enc.mask.all():
        cross_bias = np.broadcast_to(
            np.where(enc.mask, 0.0, NEG_INF), (t_len, enc.mask.size)).copy()
    self_bias = causal_bias(t_len)
    for layer in range(config.n_layers):
        x = multibranch_decoder_block(x, enc, params, f"dec.l{layer}", config,
                                      self_bias=self_bias, cross_bias=cross_bias)
    return ad.matmul(x, ad.transpose(params["emb"]))


def decode_greedy(enc: EncoderState, params: ModelParams,
                  max_len: int | None = None,
                  force_len: int | None = None) -> list[int]:
    """Greedy left-to-right decoding, one full decoder pass per emitted token.

    Stops at ⟨eos⟩ or ``max_len``. ``force_len`` suppresses ⟨eos⟩ and emits
    exactly that many tokens (used by the latency benchmark).
    """
    config = params.config
    limit = force_len if force_len is not None else (max_len or config.max_len)
    ids = [BOS]
    out: list[int] = []
    with ad.no_grad():
        while len(out) < limit:
            logits = decoder_forward(ids, enc, params).data[-1]
            if force_len is not None:
                logits = logits.copy()
                logits[EOS] = -np.inf
            nxt = int(np.argmax(logits))
            if nxt == EOS:
                break
            out.append(nxt)
            ids.append(nxt)
    return out


def translate_at(text: str, params: ModelParams, vocab: Vocab,
                 lexicon=frozenset(), patterns=None,
                 max_len: int | None = None) -> TranslationResult:
    """Guard, encode, greedy-decode, restore guarded spans."""
    guarded = guard_text(text, patterns)
    clean = preprocess(guarded.guarded)
    if not clean:
        return TranslationResult(text="", token_ids=[], predicted_length=0)
    sent = segment_greedy(clean, lexicon, vocab)
    with ad.no_grad():
        enc = encode(sent, params)
        ids = decode_greedy(enc, params, max_len=max_len)
    translated = detokenize(ids, vocab)
    return TranslationResult(text=unguard(translated, guarded), token_ids=ids,
                             predicted_length=len(ids), truncated=enc.truncated)


def augment_corpus(teacher: ModelParams, mono, vocab: Vocab,
                   lexicon=frozenset(), patterns=None) -> list[tuple[str, str]]:
    """Teacher-translate monolingual sources into synthetic training pairs.

    Sources whose translation comes back empty are dropped; the output is
    deterministic given the teacher.
    """
    pairs = []
    for src in mono:
        result = translate_at(src, teacher, vocab, lexicon, patterns)
        if result.text:
            pairs.append((src, result.text))
    return pairs
