"""Term normalization and the character conventions shared by matching.

Conventions fixed here and used everywhere else:

* Offsets are 0-based, end-exclusive, counted in Unicode code points.
* A word boundary is the start/end of text or a non-alphanumeric code point.
* Case folding is per-code-point and length-preserving, so folded offsets
  always line up with raw offsets.
"""

from __future__ import annotations

import re
from typing import NamedTuple

# Bumped whenever normalization or matching semantics change; recorded in
# vocabulary build_meta and mention matcher_version.
NORMALIZATION_VERSION = "norm-1"

TERM_KIND_LABEL = "label"
TERM_KIND_SYNONYM = "synonym"
TERM_KIND_ABBREVIATION = "abbreviation"

_WS_RE = re.compile(r"\s+")


def fold_char(ch: str) -> str:
    """Lowercase one code point only when that keeps length 1."""
    low = ch.lower()
    return low if len(low) == 1 else ch


def fold_text(text: str) -> str:
    """Length-preserving lowercase of a whole string.

    str.lower() is 1:1 for ASCII, so the common case is a single C call.
    """
    if text.isascii():
        return text.lower()
    return "".join(fold_char(ch) for ch in text)


class NormalizedTerm(NamedTuple):
    text: str
    is_abbreviation: bool


def normalize_term(raw: str) -> NormalizedTerm:
    """Canonicalize a vocabulary surface form.

    Collapses whitespace runs, trims, strips one trailing period, and
    lowercases -- except that short all-uppercase alphabetic strings
    (length <= 4) keep their case and are tagged as abbreviations, which
    matching later treats case-sensitively.
    """
    text = _WS_RE.sub(" ", raw).strip()
    if text.endswith("."):
        text = text[:-1]
    if 1 <= len(text) <= 4 and text.isalpha() and text.isupper():
        return NormalizedTerm(text, True)
    return NormalizedTerm(fold_text(text), False)


def is_abbreviation_term(term: str) -> bool:
    """True when a normalized term carries abbreviation (case-sensitive) semantics."""
    return 1 <= len(term) <= 4 and term.isalpha() and term.isupper()


def span_has_word_boundaries(text: str, start: int, end: int) -> bool:
    """Both edges of [start, end) sit on word boundaries."""
    if start > 0 and text[start - 1].isalnum():
        return False
    if end < len(text) and text[end].isalnum():
        return False
    return True


_KEEP = object()


class _SeparatorTable:
    """Lazy str.translate table mapping non-alphanumeric code points to a space.

    Covers arbitrary Unicode without precomputing the full range: code
    points are classified on first sight and cached. Raising LookupError
    tells str.translate to keep the character unchanged.
    """

    def __init__(self) -> None:
        self._cache: dict[int, object] = {}

    def __getitem__(self, codepoint: int):
        entry = self._cache.get(codepoint)
        if entry is None:
            entry = _KEEP if chr(codepoint).isalnum() else 0x20
            self._cache[codepoint] = entry
        if entry is _KEEP:
            raise LookupError(codepoint)
        return entry


SEPARATOR_TABLE = _SeparatorTable()


def token_set(text: str) -> set[str]:
    """Set of alphanumeric tokens in ``text`` (cheap candidate prefilter)."""
    return set(text.translate(SEPARATOR_TABLE).split())


def leading_alnum_run(term: str) -> str:
    """The maximal alphanumeric prefix of a term ('' if it starts elsewhere)."""
    for i, ch in enumerate(term):
        if not ch.isalnum():
            return term[:i]
    return term


def sentence_span(text: str, pos: int) -> tuple[int, int]:
    """[start, end) of the sentence containing code point index ``pos``.

    A sentence terminator is '.', '!', '?' or a newline that is followed by
    whitespace or end of text; the terminator belongs to its sentence.
    Leading whitespace after a terminator belongs to the next sentence's gap
    and is excluded.
    """
    n = len(text)
    if n == 0:
        return (0, 0)
    pos = min(max(pos, 0), n - 1)
    end = n
    for i in range(pos, n):
        if _is_terminator(text, i):
            end = i + 1
            break
    start = 0
    for i in range(pos - 1, -1, -1):
        if _is_terminator(text, i):
            start = i + 1
            break
    while start < end and text[start].isspace():
        start += 1
    return (start, end)


def _is_terminator(text: str, i: int) -> bool:
    if text[i] not in ".!?\n":
        return False
    return i + 1 >= len(text) or text[i + 1].isspace()
