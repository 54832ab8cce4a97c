"""Corpus BLEU and parallel-vs-autoregressive latency benchmarking.

BLEU works on token sequences (characters, matching the model's unit) with
clipped n-gram precisions, a brevity penalty, and an optional add-one
smoothing flag for sentence-level use. The latency benchmark times single
sentences and reports a real-time-factor proxy against an estimated speech
duration of ``seconds_per_char`` per output character.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from statistics import median

import numpy as np

from . import autodiff as ad
from .at_model import decode_greedy
from .errors import EmptyInputError
from .model import ModelParams, decode_parallel, encode, init_decoder_inputs


@dataclass
class BleuReport:
    bleu: float
    precisions: list[float]
    brevity_penalty: float
    candidate_length: int
    reference_length: int


def _ngrams(tokens, order: int) -> Counter:
    return Counter(tuple(tokens[i:i + order]) for i in range(len(tokens) - order + 1))


def bleu(candidates, references, max_order: int = 4, smooth: bool = False) -> BleuReport:
    """Corpus BLEU in [0, 1]; strict mode scores 0 if any order has no match."""
    candidates = [list(c) for c in candidates]
    references = [list(r) for r in references]
    if not candidates or len(candidates) != len(references):
        raise EmptyInputError(
            f"bleu: need equal non-empty lists, got {len(candidates)} vs {len(references)}")
    matched = [0] * max_order
    total = [0] * max_order
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for order in range(1, max_order + 1):
            cand_grams = _ngrams(cand, order)
            ref_grams = _ngrams(ref, order)
            matched[order - 1] += sum(min(n, ref_grams[g]) for g, n in cand_grams.items())
            total[order - 1] += max(len(cand) - order + 1, 0)
    precisions = []
    for m, t in zip(matched, total):
        if smooth:
            precisions.append((m + 1) / (t + 1))
        else:
            precisions.append(m / t if t else 0.0)
    if min(precisions) > 0:
        log_avg = sum(np.log(p) for p in precisions) / max_order
        geo = float(np.exp(log_avg))
    else:
        geo = 0.0
    bp = 1.0 if cand_len > ref_len else (
        float(np.exp(1 - ref_len / cand_len)) if cand_len > 0 else 0.0)
    return BleuReport(bleu=bp * geo, precisions=precisions, brevity_penalty=bp,
                      candidate_length=cand_len, reference_length=ref_len)


@dataclass
class LatencyReport:
    per_sentence: list[float]
    mean_latency: float
    mean_latency_per_char: float
    rtf_proxy: float
    speedup: float | None = None  # AT mean latency / NAT mean latency


def _time_call(fn, repetitions: int) -> float:
    fn()  # warmup, excluded
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return median(samples)


def bench_latency(nat_params: ModelParams, testset, repetitions: int = 3,
                  seconds_per_char: float = 0.2,
                  at_params: ModelParams | None = None,
                  target_len: int | None = None) -> LatencyReport:
    """Time parallel decoding per sentence; optionally time the autoregressive
    model on the identical set and report the speedup ratio.

    ``testset`` holds prepared source sentences (SegmentedSentence). With
    ``target_len`` both models emit exactly that many tokens, which pins the
    per-sentence output size for fair cross-model comparison.
    """
    if not testset:
        raise EmptyInputError("bench_latency: empty test set")

    def nat_times():
        times, chars = [], 0
        for sent in testset:
            with ad.no_grad():
                enc = encode(sent, nat_params)
                t_len = target_len or max(1, int(enc.mask.sum()))

                def run():
                    with ad.no_grad():
                        dec_in = init_decoder_inputs(enc, t_len, nat_params.config)
                        decode_parallel(dec_in, enc, nat_params)

                times.append(_time_call(run, repetitions))
                chars += t_len
        return times, chars

    nat_samples, nat_chars = nat_times()
    mean_latency = sum(nat_samples) / len(nat_samples)
    chars_per_sentence = nat_chars / len(testset)
    report = LatencyReport(
        per_sentence=nat_samples,
        mean_latency=mean_latency,
        mean_latency_per_char=mean_latency / chars_per_sentence,
        rtf_proxy=mean_latency / (chars_per_sentence * seconds_per_char),
    )
    if at_params is not None:
        at_samples = []
        for sent in testset:
            with ad.no_grad():
                enc = encode(sent, at_params)
                t_len = target_len or max(1, int(enc.mask.sum()))

                def run():
                    decode_greedy(enc, at_params, force_len=t_len)

                at_samples.append(_time_call(run, repetitions))
        report.speedup = (sum(at_samples) / len(at_samples)) / mean_latency
    return report


def attention_gold_mass(params: ModelParams, examples) -> float:
    """Mean per-row cross-attention mass that lands on gold alignment cells.

    ``examples`` are TrainExamples with attention targets; decoding uses the
    gold target length so the grids line up.
    """
    masses = []
    for ex in examples:
        if ex.align is None or ex.align.sum() == 0:
            continue
        with ad.no_grad():
            enc = encode(ex.src, params)
            out = decode_parallel(init_decoder_inputs(enc, len(ex.tgt_ids),
                                                      params.config), enc, params)
        attn = out.cross_attention.data
        masses.append(float((attn * ex.align).sum() / ex.align.shape[0]))
    if not masses:
        raise EmptyInputError("attention_gold_mass: no aligned examples")
    return float(np.mean(masses))
