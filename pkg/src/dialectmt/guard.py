"""Protect untranslatable substrings behind the ⟨rep⟩ marker.

URLs, e-mail addresses, Latin abbreviations, and emoticons are replaced by a
single marker token before translation and restored afterwards. A parallel
decoder can emit the wrong number of markers, so restoration repairs count
mismatches: surplus markers are dropped, missing originals are appended.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConfigError
from .textproc import RESERVED_TOKENS, REP_TOKEN

_URL_CHARS = r"[A-Za-z0-9./_\-?=&#%~:+]"

DEFAULT_PATTERNS = (
    rf"https?://{_URL_CHARS}+",
    rf"www\.{_URL_CHARS}+",
    r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}",
    r"[A-Za-z][A-Za-z0-9.&-]{1,}",  # Latin abbreviations of length >= 2
    r"(?:[:;=8][\-^']?[)(DPpOo3*]|[\^>TxXoO;~-][_.\-o]?[\^<TxXoO;~-])",  # emoticons
)


@dataclass
class GuardedText:
    """Text with irregular spans replaced, plus what was replaced and where."""

    guarded: str
    originals: list[str] = field(default_factory=list)
    spans: list[tuple[int, int]] = field(default_factory=list)


def compile_patterns(patterns) -> list[re.Pattern]:
    compiled = []
    for pat in patterns:
        try:
            compiled.append(re.compile(pat))
        except re.error as exc:
            raise ConfigError(f"bad guard pattern {pat!r}: {exc}") from exc
    return compiled


def load_patterns(path) -> list[re.Pattern]:
    """Pattern file: one regular expression per line, order = priority."""
    with open(path, encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f if line.strip()]
    return compile_patterns(lines)


def guard(text: str, patterns=None) -> GuardedText:
    """Replace matches with ⟨rep⟩, left to right, earliest match first.

    Later matches overlapping an accepted one are skipped. The marker itself
    never matches, so guarding an already guarded text is a no-op.
    """
    if patterns is None:
        patterns = DEFAULT_PATTERNS
    compiled = compile_patterns(
        p.pattern if isinstance(p, re.Pattern) else p for p in patterns)
    matches: list[tuple[int, int]] = []
    for rank, pat in enumerate(compiled):
        for m in pat.finditer(text):
            if m.end() > m.start():
                matches.append((m.start(), rank, m.end()))
    # marker tokens already in the text are off limits (their Latin letters
    # would otherwise match the abbreviation pattern on a second pass)
    protected: list[tuple[int, int]] = []
    for marker in RESERVED_TOKENS:
        pos = text.find(marker)
        while pos != -1:
            protected.append((pos, pos + len(marker)))
            pos = text.find(marker, pos + 1)
    # earliest start wins; ties go to the higher-priority pattern
    taken: list[tuple[int, int]] = []
    for start, _rank, end in sorted(matches):
        if all(end <= s or start >= e for s, e in taken + protected):
            taken.append((start, end))
    taken.sort()
    out = []
    originals = []
    cursor = 0
    for start, end in taken:
        out.append(text[cursor:start])
        out.append(REP_TOKEN)
        originals.append(text[start:end])
        cursor = end
    out.append(text[cursor:])
    return GuardedText(guarded="".join(out), originals=originals, spans=taken)


def unguard(translated: str, guarded: GuardedText) -> str:
    """Replace the i-th marker with originals[i]; repair count mismatches."""
    pieces = translated.split(REP_TOKEN)
    n_markers = len(pieces) - 1
    originals = guarded.originals
    out = []
    for i, piece in enumerate(pieces):
        out.append(piece)
        if i < n_markers:
            out.append(originals[i] if i < len(originals) else "")
    result = "".join(out)
    if n_markers < len(originals):
        tail = " ".join(originals[n_markers:])
        sep = " " if result and not result.endswith(" ") else ""
        result = result + sep + tail if result else tail
    return result
