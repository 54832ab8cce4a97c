"""Two-pass glancing training with token, length, and attention-alignment
losses, plus the teacher-forcing loop for the autoregressive baseline.

Each training step decodes once without gradients, reveals a slice of the
reference proportional to how wrong that first pass was, then decodes again
and learns the still-hidden positions. Runs are deterministic given the seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .alignment import CharAlignmentMatrix, WordAlignment, word_to_char_alignment
from .autodiff import Tensor
from .errors import ConfigError, DimensionError, EmptyInputError
from .evaluate import bleu
from .model import (
    ModelConfig,
    ModelParams,
    decode_parallel,
    encode,
    init_decoder_inputs,
    init_params,
    length_logits,
    translate,
)
from .at_model import decoder_forward, translate_at
from .textproc import BOS, EOS, SegmentedSentence, TokenSeq, Vocab


@dataclass
class GlancingSchedule:
    """Linear decay of the glancing ratio, clamped at the endpoints."""

    lambda_start: float = 0.5
    lambda_end: float = 0.3
    total_steps: int = 1

    def __post_init__(self):
        if not (0.0 <= self.lambda_end <= self.lambda_start <= 1.0):
            raise ConfigError(
                f"need 0 <= lambda_end <= lambda_start <= 1, got "
                f"{self.lambda_start}..{self.lambda_end}")

    def value(self, step: int) -> float:
        if self.total_steps <= 1:
            return self.lambda_end
        frac = min(max(step / (self.total_steps - 1), 0.0), 1.0)
        return self.lambda_start + (self.lambda_end - self.lambda_start) * frac


@dataclass
class LossWeights:
    token: float = 1.0
    length: float = 0.1
    alignment: float = 0.5

    def __post_init__(self):
        if min(self.token, self.length, self.alignment) < 0:
            raise ConfigError("loss weights must be non-negative")


@dataclass
class TrainReport:
    """One row per epoch: losses, length accuracy, validation BLEU, time."""

    rows: list[dict] = field(default_factory=list)
    diverged: bool = False

    def write_tsv(self, path):
        header = ["epoch", "token_loss", "length_loss", "length_acc",
                  "alignment_loss", "val_bleu", "seconds"]
        with open(path, "a", encoding="utf-8") as f:
            if f.tell() == 0:
                f.write("\t".join(header) + "\n")
            for row in self.rows:
                f.write("\t".join(f"{row[k]:.6g}" if isinstance(row[k], float)
                                  else str(row[k]) for k in header) + "\n")


@dataclass
class TrainExample:
    src: SegmentedSentence
    tgt_ids: list[int]
    length_class: int
    align: np.ndarray | None = None   # binary [T x S] attention target


def prepare_examples(pairs, vocab: Vocab, config: ModelConfig,
                     alignments=None) -> list[TrainExample]:
    """Tokenize word-level pairs and attach length classes and, when word
    alignments are given, character-level attention targets."""
    k = config.length_offset_range
    examples = []
    for n, (src_words, tgt_words) in enumerate(pairs):
        src_ids, flags = [], []
        for w in src_words:
            seq = [vocab.id_of(c) for c in _word_chars(w)]
            src_ids.extend(seq)
            flags.extend([1] + [0] * (len(seq) - 1))
        tgt_ids = [vocab.id_of(c) for w in tgt_words for c in _word_chars(w)]
        if not src_ids or not tgt_ids:
            continue
        offset = int(np.clip(len(tgt_ids) - len(src_ids), -k, k))
        align = None
        if alignments is not None:
            word_align = alignments[n]
            align = word_to_char_alignment(word_align, [list(_word_chars(w)) for w in src_words],
                                           [list(_word_chars(w)) for w in tgt_words]).matrix
        sent = SegmentedSentence(tokens=TokenSeq(src_ids, "".join(src_words)),
                                 boundary_flags=flags, words=list(src_words))
        examples.append(TrainExample(src=sent, tgt_ids=tgt_ids,
                                     length_class=offset + k, align=align))
    return examples


def _word_chars(word: str):
    from .textproc import _iter_chars
    return list(_iter_chars(word))


def sample_glancing_positions(first_pass_pred, reference, lam: float,
                              rng: np.random.Generator) -> np.ndarray:
    """Reveal floor(lam * Hamming(pred, ref)) positions, chosen uniformly
    without replacement over the whole target."""
    pred = np.asarray(first_pass_pred)
    ref = np.asarray(reference)
    if pred.shape != ref.shape:
        raise DimensionError(
            f"prediction length {pred.shape} != reference length {ref.shape}")
    hamming = int((pred != ref).sum())
    n_sample = int(math.floor(lam * hamming))
    mask = np.zeros(len(ref), dtype=bool)
    if n_sample > 0:
        mask[rng.choice(len(ref), size=n_sample, replace=False)] = True
    return mask


def glancing_step(example: TrainExample, params: ModelParams, lam: float,
                  weights: LossWeights, rng: np.random.Generator,
                  mask_unaligned: bool = False):
    """One two-pass step on one sentence; gradients accumulate into params.

    Pass 1 runs off-tape; the sampled reference embeddings replace the copied
    decoder inputs; pass 2 pays token loss only at unsampled positions, plus
    the length and cross-attention alignment terms.
    """
    config = params.config
    tgt_ids = example.tgt_ids
    t_len = len(tgt_ids)
    if weights.alignment > 0 and example.align is None:
        raise ConfigError("alignment weight > 0 but example has no alignment target")

    with ad.no_grad():
        enc0 = encode(example.src, params)
        out0 = decode_parallel(init_decoder_inputs(enc0, t_len, config), params=params,
                               enc=enc0)
    mask = sample_glancing_positions(out0.predicted_ids, tgt_ids, lam, rng)

    with ad.record() as tape:
        enc = encode(example.src, params)
        base = init_decoder_inputs(enc, t_len, config)
        ref_emb = ad.embedding(params["emb"], tgt_ids)
        col = mask.astype(float)[:, None]
        dec_in = ad.add(ad.mul(base, 1.0 - col), ad.mul(ref_emb, col))
        out = decode_parallel(dec_in, enc, params)

        components = {"token": 0.0, "length": 0.0, "alignment": 0.0}
        terms = []
        if not mask.all():
            token_loss = ad.cross_entropy(out.logits, tgt_ids, ignore_mask=mask)
            components["token"] = token_loss.item()
            terms.append(ad.scale(token_loss, weights.token))
        len_loss = ad.cross_entropy(length_logits(enc, params), [example.length_class])
        components["length"] = len_loss.item()
        components["length_correct"] = float(
            int(np.argmax(length_logits(enc, params).data[0])) == example.length_class)
        if weights.length > 0:
            terms.append(ad.scale(len_loss, weights.length))
        if weights.alignment > 0:
            cell_mask = example.align > -1  # all cells; sentences carry no padding
            if mask_unaligned:
                cell_mask = np.broadcast_to(
                    example.align.sum(axis=1, keepdims=True) > 0, example.align.shape)
            align_loss = ad.mse_loss(out.cross_attention, example.align, mask=cell_mask)
            components["alignment"] = align_loss.item()
            terms.append(ad.scale(align_loss, weights.alignment))
        if not terms:  # every position revealed and no auxiliary weights
            terms.append(ad.scale(len_loss, 0.0))
        total = terms[0]
        for term in terms[1:]:
            total = ad.add(total, term)
        tape.backward(total)
    components["total"] = total.item()
    components["mask"] = mask
    components["decode"] = out
    return total.item(), components


def teacher_forcing_step(example: TrainExample, params: ModelParams):
    """Cross-entropy step for the autoregressive baseline."""
    tgt_in = [BOS] + example.tgt_ids
    tgt_out = example.tgt_ids + [EOS]
    with ad.record() as tape:
        enc = encode(example.src, params)
        logits = decoder_forward(tgt_in, enc, params)
        loss = ad.cross_entropy(logits, tgt_out)
        tape.backward(loss)
    return loss.item(), {"token": loss.item(), "length": 0.0, "alignment": 0.0,
                         "length_correct": 1.0}


class SGD:
    """Plain SGD with global-norm gradient clipping."""

    def __init__(self, lr: float = 0.1, clip_norm: float = 1.0):
        self.lr = lr
        self.clip_norm = clip_norm

    def step(self, params: ModelParams, scale: float = 1.0):
        factor = scale * _clip_factor(params, self.clip_norm, scale)
        for _, t in params.items():
            if t.grad is not None:
                t.data -= self.lr * factor * t.grad


class Adam:
    """Adam with global-norm gradient clipping."""

    def __init__(self, lr: float = 2e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, clip_norm: float = 1.0):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, scale: float = 1.0):
        self.t += 1
        factor = scale * _clip_factor(params, self.clip_norm, scale)
        for name, t in params.items():
            if t.grad is None:
                continue
            g = t.grad * factor
            m = self.m.setdefault(name, np.zeros_like(t.data))
            v = self.v.setdefault(name, np.zeros_like(t.data))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            mhat = m / (1 - self.beta1 ** self.t)
            vhat = v / (1 - self.beta2 ** self.t)
            t.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _clip_factor(params: ModelParams, clip_norm: float, scale: float) -> float:
    if clip_norm <= 0:
        return 1.0
    sq = sum(float((t.grad ** 2).sum()) for _, t in params.items()
             if t.grad is not None)
    norm = math.sqrt(sq) * scale
    return min(1.0, clip_norm / norm) if norm > 0 else 1.0


def make_optimizer(name: str, lr: float, clip_norm: float = 1.0):
    if name == "sgd":
        return SGD(lr=lr, clip_norm=clip_norm)
    if name == "adam":
        return Adam(lr=lr, clip_norm=clip_norm)
    raise ConfigError(f"unknown optimizer {name!r}")


def validation_bleu(params: ModelParams, val_pairs, vocab: Vocab, lexicon) -> float:
    """Character BLEU of greedy translations against the references."""
    if not val_pairs:
        return 0.0
    cands, refs = [], []
    translate_fn = translate if params.config.model_type == "nat" else translate_at
    for src_words, tgt_words in val_pairs:
        result = translate_fn("".join(src_words), params, vocab, lexicon)
        cands.append(result.token_ids)
        refs.append([vocab.id_of(c) for w in tgt_words for c in _word_chars(w)])
    return bleu(cands, refs, smooth=True).bleu


def train(corpus, augmented_corpus, config: ModelConfig,
          schedule: GlancingSchedule | None = None,
          weights: LossWeights | None = None, seed: int = 0, *,
          vocab: Vocab, lexicon=frozenset(), alignments=None,
          val_pairs=None, epochs: int = 20, batch_size: int = 32,
          lr: float = 2e-3, optimizer: str = "adam",
          early_stop_bleu: float | None = None,
          mask_unaligned: bool = False) -> tuple[ModelParams, TrainReport]:
    """Full training run; returns the best-validation-BLEU checkpoint.

    ``alignments`` are word alignments for the real corpus (augmented pairs
    train without the alignment term). Identical seeds give bit-identical
    results. Divergence aborts with the last finite parameters.
    """
    config.validate()
    weights = weights or LossWeights()
    real = prepare_examples(corpus, vocab, config, alignments)
    aug = prepare_examples(augmented_corpus or [], vocab, config)
    examples = real + aug
    if not examples:
        raise EmptyInputError("train: empty corpus")
    steps_per_epoch = math.ceil(len(examples) / batch_size)
    if schedule is None:
        schedule = GlancingSchedule(total_steps=max(1, epochs * steps_per_epoch))
    rng = np.random.default_rng(seed)
    params = init_params(config, seed=seed)
    opt = make_optimizer(optimizer, lr)
    is_at = config.model_type == "at"
    aug_weights = LossWeights(token=weights.token, length=weights.length,
                              alignment=0.0)

    report = TrainReport()
    best = params.copy()
    best_bleu = -1.0
    last_finite = params.copy()
    step = 0
    for epoch in range(epochs):
        started = time.perf_counter()
        order = rng.permutation(len(examples))
        sums = {"token": 0.0, "length": 0.0, "alignment": 0.0, "length_correct": 0.0}
        for chunk_start in range(0, len(order), batch_size):
            chunk = order[chunk_start:chunk_start + batch_size]
            params.zero_grad()
            lam = schedule.value(step)
            finite = True
            for idx in chunk:
                ex = examples[idx]
                if is_at:
                    loss, comps = teacher_forcing_step(ex, params)
                else:
                    w = weights if ex.align is not None else aug_weights
                    loss, comps = glancing_step(ex, params, lam, w, rng,
                                                mask_unaligned=mask_unaligned)
                if not math.isfinite(loss):
                    finite = False
                    break
                for key in ("token", "length", "alignment", "length_correct"):
                    sums[key] += comps.get(key, 0.0)
            if not finite:
                report.diverged = True
                return last_finite, report
            opt.step(params, scale=1.0 / len(chunk))
            step += 1
        last_finite = params.copy()
        val = validation_bleu(params, val_pairs, vocab, lexicon) if val_pairs else math.nan
        n = len(examples)
        report.rows.append({
            "epoch": epoch,
            "token_loss": sums["token"] / n,
            "length_loss": sums["length"] / n,
            "length_acc": sums["length_correct"] / n,
            "alignment_loss": sums["alignment"] / n,
            "val_bleu": val,
            "seconds": time.perf_counter() - started,
        })
        if val_pairs and val > best_bleu:
            best_bleu = val
            best = params.copy()
        if early_stop_bleu is not None and val_pairs and val >= early_stop_bleu:
            break
    if not val_pairs:
        best = params
    return best, report
