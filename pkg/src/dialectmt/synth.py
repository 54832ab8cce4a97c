"""Deterministic toy-dialect corpus generator with gold alignments.

Sentences are drawn from a synthetic word inventory; a rule set rewrites them
into a "dialect": per-character substitutions, whole-word replacements, and
marker-triggered swaps of adjacent words. Because the rules are applied
programmatically, every pair carries gold word alignments, which gives the
aligner and the attention-supervision loss a measurable ground truth.

Every inventory word uses globally unique characters, so greedy segmentation
recovers the word boundaries exactly and targets never contain adjacent
duplicate characters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alignment import WordAlignment
from .errors import ConfigError
from .textproc import REP_TOKEN, _iter_chars

SRC_CHAR_BASE = 0x4E00   # source characters
TGT_CHAR_BASE = 0x6E00   # characters introduced by substitution rules


@dataclass
class DialectRuleSet:
    """Functional rewrite rules from source words to dialect words."""

    char_map: dict[str, str] = field(default_factory=dict)
    word_rules: dict[str, str] = field(default_factory=dict)
    reorder_markers: set[str] = field(default_factory=set)
    seed: int = 0

    def apply_word(self, word: str) -> str:
        if word == REP_TOKEN:
            return word
        if word in self.word_rules:
            return self.word_rules[word]
        return "".join(self.char_map.get(c, c) for c in word)

    def apply(self, src_words) -> tuple[list[str], WordAlignment]:
        """Rewrite a sentence; returns target words plus gold links."""
        n = len(src_words)
        tgt = [self.apply_word(w) for w in src_words]
        position = list(range(n))
        i = 0
        while i < n - 1:
            if src_words[i] in self.reorder_markers:
                position[i], position[i + 1] = position[i + 1], position[i]
                i += 2
            else:
                i += 1
        links = frozenset((i, position[i]) for i in range(n))
        ordered = [None] * n
        for i in range(n):
            ordered[position[i]] = tgt[i]
        return ordered, WordAlignment(links, src_len=n, tgt_len=n)


@dataclass
class SynthPair:
    source_words: list[str]
    target_words: list[str]
    gold: WordAlignment

    @property
    def source(self) -> str:
        return "".join(self.source_words)

    @property
    def target(self) -> str:
        return "".join(self.target_words)


def make_inventory(vocab_size: int, seed: int) -> list[str]:
    """Word inventory with disjoint character sets across words."""
    if vocab_size < 10:
        raise ConfigError("vocab_size must be >= 10")
    rng = np.random.default_rng(seed)
    words = []
    cp = SRC_CHAR_BASE
    for _ in range(vocab_size):
        length = int(rng.integers(1, 4))
        words.append("".join(chr(cp + k) for k in range(length)))
        cp += length
    return words


def default_rules(inventory, seed: int = 0, char_frac: float = 0.5,
                  word_frac: float = 0.2, reorder_frac: float = 0.0) -> DialectRuleSet:
    """Rule set over an inventory: substitute a fraction of characters, replace
    a fraction of words outright, optionally mark words that swap order."""
    rng = np.random.default_rng(seed)
    chars = sorted({c for w in inventory for c in w})
    char_map = {}
    for c in chars:
        if rng.random() < char_frac:
            char_map[c] = chr(ord(c) - SRC_CHAR_BASE + TGT_CHAR_BASE)
    word_rules = {}
    fresh = TGT_CHAR_BASE + 0x1000
    markers = set()
    for w in inventory:
        r = rng.random()
        if r < word_frac:
            length = int(rng.integers(1, 4))
            word_rules[w] = "".join(chr(fresh + k) for k in range(length))
            fresh += length
        elif r < word_frac + reorder_frac:
            markers.add(w)
    return DialectRuleSet(char_map=char_map, word_rules=word_rules,
                          reorder_markers=markers, seed=seed)


def generate(rules: DialectRuleSet, n: int, vocab_size: int = 50,
             len_range: tuple[int, int] = (3, 8), seed: int = 0,
             inventory=None, rep_prob: float = 0.05) -> list[SynthPair]:
    """Sample ``n`` source sentences and rewrite them with ``rules``.

    Deterministic per seed. The same word never appears twice in a row, so
    rewritten sentences carry no adjacent duplicate characters. With
    probability ``rep_prob`` a slot holds the ⟨rep⟩ marker, which every rule
    set copies through unchanged.
    """
    lo, hi = len_range
    if lo < 1 or hi < lo:
        raise ConfigError(f"bad len_range {len_range}")
    if inventory is None:
        inventory = make_inventory(vocab_size, rules.seed)
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        length = int(rng.integers(lo, hi + 1))
        words: list[str] = []

        def banned(cand):
            # no immediate repeats; with reorder markers in play a swap can
            # pull words two slots apart next to each other, so keep every
            # 3-word window duplicate-free
            if words and cand == words[-1]:
                return True
            return bool(rules.reorder_markers) and cand in words[-2:]

        for _ in range(length):
            if rng.random() < rep_prob:
                cand = REP_TOKEN
                if banned(cand):
                    cand = inventory[int(rng.integers(len(inventory)))]
            else:
                cand = inventory[int(rng.integers(len(inventory)))]
            while banned(cand):
                cand = inventory[int(rng.integers(len(inventory)))]
            words.append(cand)
        tgt, gold = rules.apply(words)
        pairs.append(SynthPair(source_words=words, target_words=tgt, gold=gold))
    return pairs


def verify_pair(rules: DialectRuleSet, pair: SynthPair) -> bool:
    """Re-apply the rules to the source and compare with the stored pair."""
    tgt, gold = rules.apply(pair.source_words)
    return tgt == pair.target_words and gold.links == pair.gold.links


def write_corpus(pairs, path, segmented: bool = True):
    """TSV: source TAB target per line, words space-separated when segmented."""
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            if segmented:
                f.write(" ".join(p.source_words) + "\t" + " ".join(p.target_words) + "\n")
            else:
                f.write(p.source + "\t" + p.target + "\n")


def read_corpus(path) -> list[tuple[list[str], list[str]]]:
    """Read a TSV corpus into (source words, target words) pairs; unsegmented
    lines come back as single-character words."""
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            src, _, tgt = line.partition("\t")
            out.append((src.split(" ") if " " in src else list(_iter_chars(src)),
                        tgt.split(" ") if " " in tgt else list(_iter_chars(tgt))))
    return out


def save_rules(rules: DialectRuleSet, path):
    """Flat rule file: rule_type TAB lhs TAB rhs."""
    with open(path, "w", encoding="utf-8") as f:
        for lhs, rhs in sorted(rules.char_map.items()):
            f.write(f"char\t{lhs}\t{rhs}\n")
        for lhs, rhs in sorted(rules.word_rules.items()):
            f.write(f"word\t{lhs}\t{rhs}\n")
        for lhs in sorted(rules.reorder_markers):
            f.write(f"reorder\t{lhs}\t\n")


def load_rules(path, seed: int = 0) -> DialectRuleSet:
    rules = DialectRuleSet(seed=seed)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[0] not in ("char", "word", "reorder"):
                raise ConfigError(f"{path}:{lineno}: bad rule line {line!r}")
            kind, lhs, rhs = parts
            if kind == "char":
                rules.char_map[lhs] = rhs
            elif kind == "word":
                rules.word_rules[lhs] = rhs
            else:
                rules.reorder_markers.add(lhs)
    return rules


def lexicon_for(pairs, rules: DialectRuleSet | None = None) -> set[str]:
    """All words seen on either side (for the greedy segmenter)."""
    lex = set()
    for p in pairs:
        lex.update(p.source_words)
        lex.update(p.target_words)
    lex.discard(REP_TOKEN)
    return lex
