"""Estimator-style wrappers: fit on parallel corpora, predict translations.

``NatTranslator`` and ``AtTranslator`` take corpora of (source words, target
words) pairs (or raw strings, segmented greedily) and expose ``predict`` over
lists of raw strings. ``IbmAligner`` fits translation probabilities and
predicts word alignments.
"""

from __future__ import annotations

import numpy as np

from .alignment import train_ibm1, viterbi_align
from .base import BaseEstimator, check_is_fitted, check_pair_list, check_text_list
from .model import ModelConfig, save_checkpoint, translate
from .at_model import translate_at
from .synth import SynthPair
from .textproc import build_vocab, segment_words
from .training import GlancingSchedule, LossWeights, train


def _as_word_pairs(pairs, lexicon):
    """Accept SynthPairs, word-list pairs, or raw string pairs."""
    out = []
    for p in pairs:
        if isinstance(p, SynthPair):
            out.append((p.source_words, p.target_words))
        else:
            src, tgt = p
            if isinstance(src, str):
                src = segment_words(src, lexicon)
            if isinstance(tgt, str):
                tgt = segment_words(tgt, lexicon)
            out.append((list(src), list(tgt)))
    return out


class _TranslatorBase(BaseEstimator):
    model_type = "nat"

    def fit(self, X, y=None, *, val_pairs=None, alignments=None,
            augmented=None):
        """Train on (source, target) pairs; ``X`` may also carry SynthPairs."""
        pairs = _as_word_pairs(check_pair_list(X), self.lexicon)
        corpus_text = [("".join(s), "".join(t)) for s, t in pairs]
        self.vocab_ = build_vocab(corpus_text)
        self.config_ = self._make_config()
        aug_pairs = _as_word_pairs(augmented, self.lexicon) if augmented else []
        val = _as_word_pairs(val_pairs, self.lexicon) if val_pairs else None
        schedule = GlancingSchedule(self.lambda_start, self.lambda_end,
                                    total_steps=1)
        schedule.total_steps = max(
            1, self.epochs * int(np.ceil(len(pairs) / self.batch_size)))
        self.params_, self.report_ = train(
            pairs, aug_pairs, self.config_,
            schedule=schedule,
            weights=LossWeights(alignment=self.alignment_weight
                                if alignments is not None else 0.0),
            seed=self.seed, vocab=self.vocab_, lexicon=frozenset(self.lexicon),
            alignments=alignments, val_pairs=val, epochs=self.epochs,
            batch_size=self.batch_size, lr=self.lr, optimizer=self.optimizer,
            early_stop_bleu=self.early_stop_bleu)
        return self

    def predict(self, X) -> list[str]:
        check_is_fitted(self, "params_")
        out = []
        for text in check_text_list(X):
            if self.model_type == "nat":
                result = translate(text, self.params_, self.vocab_,
                                   frozenset(self.lexicon))
            else:
                result = translate_at(text, self.params_, self.vocab_,
                                      frozenset(self.lexicon))
            out.append(result.text)
        return out

    def save(self, path):
        check_is_fitted(self, "params_")
        save_checkpoint(self.params_, path)


class NatTranslator(_TranslatorBase):
    """Parallel decoder trained with glancing sampling."""

    model_type = "nat"

    def __init__(self, d_model=64, n_branches=2, n_heads=2, n_layers=1,
                 d_seg=16, max_len=256, length_offset_range=20,
                 lambda_start=0.5, lambda_end=0.3, alignment_weight=0.5,
                 epochs=20, batch_size=32, lr=2e-3, optimizer="adam",
                 early_stop_bleu=None, lexicon=(), seed=0):
        self.d_model = d_model
        self.n_branches = n_branches
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.d_seg = d_seg
        self.max_len = max_len
        self.length_offset_range = length_offset_range
        self.lambda_start = lambda_start
        self.lambda_end = lambda_end
        self.alignment_weight = alignment_weight
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.optimizer = optimizer
        self.early_stop_bleu = early_stop_bleu
        self.lexicon = lexicon
        self.seed = seed

    def _make_config(self) -> ModelConfig:
        return ModelConfig(d_model=self.d_model, n_branches=self.n_branches,
                           n_heads=self.n_heads, n_layers=self.n_layers,
                           d_seg=self.d_seg, max_len=self.max_len,
                           length_offset_range=self.length_offset_range,
                           vocab_size=len(self.vocab_), model_type="nat").validate()


class AtTranslator(_TranslatorBase):
    """Greedy autoregressive baseline / augmentation teacher."""

    model_type = "at"

    def __init__(self, d_model=64, n_branches=2, n_heads=2, n_layers=1,
                 d_seg=16, max_len=256, epochs=20, batch_size=32, lr=2e-3,
                 optimizer="adam", early_stop_bleu=None, lexicon=(), seed=0):
        self.d_model = d_model
        self.n_branches = n_branches
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.d_seg = d_seg
        self.max_len = max_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.optimizer = optimizer
        self.early_stop_bleu = early_stop_bleu
        self.lexicon = lexicon
        self.seed = seed
        self.lambda_start = 0.5
        self.lambda_end = 0.3
        self.alignment_weight = 0.0

    def _make_config(self) -> ModelConfig:
        return ModelConfig(d_model=self.d_model, n_branches=self.n_branches,
                           n_heads=self.n_heads, n_layers=self.n_layers,
                           d_seg=self.d_seg, max_len=self.max_len,
                           vocab_size=len(self.vocab_), model_type="at").validate()


class IbmAligner(BaseEstimator):
    """EM-trained lexical translation table with Viterbi link extraction."""

    def __init__(self, iterations=5):
        self.iterations = iterations

    def fit(self, X, y=None):
        pairs = check_pair_list(X)
        self.table_ = train_ibm1(pairs, iterations=self.iterations)
        return self

    def predict(self, X):
        check_is_fitted(self, "table_")
        return [viterbi_align(self.table_, pair) for pair in check_pair_list(X)]
