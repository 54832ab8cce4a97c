"""Character tokenization, greedy word segmentation, and text cleanup.

A single vocabulary covers source and target characters so both sides share
one embedding table. Tokens are Unicode scalars, except the reserved marker
strings which map to single ids.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field

from .errors import EmptyInputError

PAD, BOS, EOS, UNK, REP = 0, 1, 2, 3, 4
PAD_TOKEN = "⟨pad⟩"
BOS_TOKEN = "⟨bos⟩"
EOS_TOKEN = "⟨eos⟩"
UNK_TOKEN = "⟨unk⟩"
REP_TOKEN = "⟨rep⟩"

RESERVED_TOKENS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN, REP_TOKEN)


@dataclass
class Vocab:
    """Bijective token <-> id map with fixed reserved ids 0-4."""

    token_to_id: dict[str, int]
    id_to_token: list[str]

    def __len__(self):
        return len(self.id_to_token)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for token in self.id_to_token:
                f.write(token + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f if line.rstrip("\n")]
        if tokens[:5] != list(RESERVED_TOKENS):
            raise EmptyInputError(f"vocab file {path} lacks the reserved token header")
        return cls(token_to_id={t: i for i, t in enumerate(tokens)}, id_to_token=tokens)


@dataclass
class TokenSeq:
    ids: list[int]
    text: str

    def __len__(self):
        return len(self.ids)


@dataclass
class SegmentedSentence:
    """Token sequence plus 0/1 flags marking each word's first character."""

    tokens: TokenSeq
    boundary_flags: list[int] = field(default_factory=list)
    words: list[str] = field(default_factory=list)

    @property
    def ids(self):
        return self.tokens.ids


def _iter_chars(text: str):
    """Yield tokens: the literal marker strings as units, all else per scalar."""
    i = 0
    while i < len(text):
        matched = None
        for marker in RESERVED_TOKENS:
            if text.startswith(marker, i):
                matched = marker
                break
        if matched:
            yield matched
            i += len(matched)
        else:
            yield text[i]
            i += 1


def build_vocab(corpus) -> Vocab:
    """Shared vocabulary over both sides of the corpus, reserved ids first.

    Characters are ordered by first appearance so the result is deterministic
    given corpus order.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmptyInputError("build_vocab: empty corpus")
    id_to_token = list(RESERVED_TOKENS)
    seen = set(RESERVED_TOKENS)
    for src, tgt in corpus:
        for text in (src, tgt):
            for ch in _iter_chars(text):
                if ch not in seen:
                    seen.add(ch)
                    id_to_token.append(ch)
    return Vocab({t: i for i, t in enumerate(id_to_token)}, id_to_token)


def tokenize(text: str, vocab: Vocab) -> TokenSeq:
    """One id per character; marker substrings collapse to their reserved id."""
    return TokenSeq([vocab.id_of(ch) for ch in _iter_chars(text)], text)


def detokenize(ids, vocab: Vocab) -> str:
    return "".join(vocab.id_to_token[i] for i in ids)


def segment_greedy(text: str, lexicon, vocab: Vocab | None = None) -> SegmentedSentence:
    """Greedy longest-match segmentation; unmatched characters stand alone.

    A reserved marker in the text is always its own word. Flags are 1 at each
    word-initial character. Token ids are filled when a vocab is given.
    """
    chars = list(_iter_chars(text))
    max_word = max((len(w) for w in lexicon), default=1)
    flags: list[int] = []
    words: list[str] = []
    i = 0
    while i < len(chars):
        if chars[i] in RESERVED_TOKENS:
            words.append(chars[i])
            flags.append(1)
            i += 1
            continue
        best = 1
        for length in range(min(max_word, len(chars) - i), 1, -1):
            if any(c in RESERVED_TOKENS for c in chars[i:i + length]):
                continue
            if "".join(chars[i:i + length]) in lexicon:
                best = length
                break
        words.append("".join(chars[i:i + best]))
        flags.extend([1] + [0] * (best - 1))
        i += best
    ids = [vocab.id_of(ch) for ch in chars] if vocab is not None else []
    return SegmentedSentence(tokens=TokenSeq(ids, text), boundary_flags=flags,
                             words=words)


def segment_words(text: str, lexicon) -> list[str]:
    """Word list from greedy segmentation (same rule as segment_greedy)."""
    return segment_greedy(text, lexicon).words


def load_lexicon(path) -> set[str]:
    with open(path, encoding="utf-8") as f:
        return {line.strip() for line in f if line.strip()}


def preprocess(text: str) -> str:
    """Unify full-width ASCII to half-width, drop control characters,
    collapse whitespace runs to single spaces. Idempotent."""
    out = []
    for ch in text:
        code = ord(ch)
        if 0xFF01 <= code <= 0xFF5E:  # full-width ASCII block
            ch = chr(code - 0xFEE0)
        elif ch == "　":  # ideographic space
            ch = " "
        if unicodedata.category(ch) in ("Cc", "Cf") and not ch.isspace():
            continue
        out.append(ch)
    return " ".join("".join(out).split())
