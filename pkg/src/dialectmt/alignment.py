"""Statistical word alignment and word-to-character target conversion.

An IBM Model 1 EM trainer stands in for an external alignment toolkit; its
Viterbi links, optionally symmetrized by intersection, are converted into the
binary character-level matrices that supervise the decoder's cross-attention:
every character of a linked target word points at the first character of its
source word.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, EmptyInputError

NULL_WORD = -1  # implicit empty source word at index -1
FLOOR_PROB = 1e-9


@dataclass
class TranslationTable:
    """p(target word | source word), normalized per source word."""

    prob: dict = field(default_factory=dict)  # (src, tgt) -> probability
    log_likelihoods: list[float] = field(default_factory=list)

    def lookup(self, src: str, tgt: str) -> float:
        return self.prob.get((src, tgt), FLOOR_PROB)


@dataclass(frozen=True)
class WordAlignment:
    """Directed link set over word indices."""

    links: frozenset
    src_len: int
    tgt_len: int

    def __post_init__(self):
        for i, j in self.links:
            if not (0 <= i < self.src_len and 0 <= j < self.tgt_len):
                raise DimensionError(
                    f"link ({i},{j}) outside {self.src_len}x{self.tgt_len}")


@dataclass
class CharAlignmentMatrix:
    """Binary (target chars x source chars) attention target."""

    matrix: np.ndarray
    src_word_starts: list[int]
    tgt_word_starts: list[int]


def train_ibm1(corpus, iterations: int = 5) -> TranslationTable:
    """EM over IBM Model 1 with a NULL source word; uniform initialization.

    ``corpus`` holds (source words, target words) pairs. Deterministic given
    corpus order; the per-iteration corpus log-likelihood is recorded and is
    non-decreasing.
    """
    pairs = [(list(s), list(t)) for s, t in corpus]
    pairs = [(s, t) for s, t in pairs if t]  # empty targets carry no evidence
    if not pairs:
        raise EmptyInputError("train_ibm1: empty corpus")
    if iterations < 1:
        raise EmptyInputError("train_ibm1: iterations must be >= 1")

    tgt_vocab_for_src: dict[str, set] = defaultdict(set)
    for src, tgt in pairs:
        for s in src + [NULL_WORD]:
            tgt_vocab_for_src[s].update(tgt)

    prob: dict = {}
    for s, tgts in tgt_vocab_for_src.items():
        uniform = 1.0 / len(tgts)
        for t in tgts:
            prob[(s, t)] = uniform

    log_likelihoods = []
    for _ in range(iterations):
        counts: dict = defaultdict(float)
        totals: dict = defaultdict(float)
        ll = 0.0
        for src, tgt in pairs:
            src_ext = src + [NULL_WORD]
            for t in tgt:
                scores = [prob.get((s, t), FLOOR_PROB) for s in src_ext]
                z = sum(scores)
                ll += math.log(z / len(src_ext))
                for s, sc in zip(src_ext, scores):
                    frac = sc / z
                    counts[(s, t)] += frac
                    totals[s] += frac
        for (s, t) in counts:
            prob[(s, t)] = counts[(s, t)] / totals[s]
        log_likelihoods.append(ll)
    return TranslationTable(prob=prob, log_likelihoods=log_likelihoods)


def viterbi_align(table: TranslationTable, pair) -> WordAlignment:
    """Link each target word to its argmax source word (NULL drops the link).

    Ties break toward the smallest source index. A real source word at the
    unknown-probability floor never wins against NULL, so fully unknown words
    stay unlinked; above the floor a tie with NULL goes to the real word.
    """
    src, tgt = list(pair[0]), list(pair[1])
    links = set()
    for j, t in enumerate(tgt):
        null_p = table.lookup(NULL_WORD, t)
        best_i, best_p = NULL_WORD, null_p
        for i, s in enumerate(src):
            p = table.lookup(s, t)
            if p > best_p or (best_i == NULL_WORD and p == null_p and p > FLOOR_PROB):
                best_i, best_p = i, p
        if best_i != NULL_WORD:
            links.add((best_i, j))
    return WordAlignment(frozenset(links), src_len=len(src), tgt_len=len(tgt))


def symmetrize(m2c: WordAlignment, c2m: WordAlignment) -> WordAlignment:
    """Intersection of the two directed link sets.

    ``c2m`` was produced with the sides swapped, so its links are given as
    (target, source) and are flipped before intersecting.
    """
    if (m2c.src_len, m2c.tgt_len) != (c2m.tgt_len, c2m.src_len):
        raise DimensionError(
            f"incompatible alignments: {m2c.src_len}x{m2c.tgt_len} vs "
            f"{c2m.src_len}x{c2m.tgt_len} (reversed)")
    flipped = {(i, j) for j, i in c2m.links}
    return WordAlignment(frozenset(m2c.links & flipped),
                         src_len=m2c.src_len, tgt_len=m2c.tgt_len)


def _word_starts(words) -> list[int]:
    starts, pos = [], 0
    for w in words:
        starts.append(pos)
        pos += len(w)
    starts.append(pos)  # sentinel: total character count
    return starts


def word_to_char_alignment(align: WordAlignment, src_words, tgt_words) -> CharAlignmentMatrix:
    """Expand word links to the character grid.

    Every character of a linked target word gets a 1 in the column of the
    first character of its source word; a target word with several links
    keeps only the smallest source index; unlinked words give zero rows.
    """
    src_words, tgt_words = list(src_words), list(tgt_words)
    if align.src_len != len(src_words) or align.tgt_len != len(tgt_words):
        raise DimensionError(
            f"alignment {align.src_len}x{align.tgt_len} does not match word "
            f"lists {len(src_words)}x{len(tgt_words)}")
    src_starts = _word_starts(src_words)
    tgt_starts = _word_starts(tgt_words)
    matrix = np.zeros((tgt_starts[-1], src_starts[-1]))
    link_for_tgt: dict[int, int] = {}
    for i, j in align.links:
        if j not in link_for_tgt or i < link_for_tgt[j]:
            link_for_tgt[j] = i
    for j, i in link_for_tgt.items():
        col = src_starts[i]
        for row in range(tgt_starts[j], tgt_starts[j + 1]):
            matrix[row, col] = 1.0
    return CharAlignmentMatrix(matrix=matrix,
                               src_word_starts=src_starts[:-1],
                               tgt_word_starts=tgt_starts[:-1])


def write_pharaoh(alignments, path):
    """One line per pair: space-separated 'i-j' source-target word links."""
    with open(path, "w", encoding="utf-8") as f:
        for a in alignments:
            f.write(" ".join(f"{i}-{j}" for i, j in sorted(a.links)) + "\n")


def read_pharaoh(path, lengths=None):
    """Parse a Pharaoh file; ``lengths`` supplies (src_len, tgt_len) per line
    (defaults to max index + 1)."""
    out = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f):
            links = set()
            for tokpair in line.split():
                i, j = tokpair.split("-")
                links.add((int(i), int(j)))
            if lengths is not None:
                src_len, tgt_len = lengths[n]
            else:
                src_len = 1 + max((i for i, _ in links), default=-1)
                tgt_len = 1 + max((j for _, j in links), default=-1)
            out.append(WordAlignment(frozenset(links), src_len, tgt_len))
    return out


def alignment_precision_recall(predicted, gold):
    """Micro-averaged precision/recall of link sets over a corpus."""
    tp = sum(len(p.links & g.links) for p, g in zip(predicted, gold))
    n_pred = sum(len(p.links) for p in predicted)
    n_gold = sum(len(g.links) for g in gold)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    return precision, recall
