"""Context windows around mentions: what the verdict stage actually reads.

Three granularities: a symmetric whitespace-word window, the containing
sentence, or the full document. Window size in words mode counts
whitespace-delimited words split evenly around the mention; clipping at a
document edge does not borrow from the other side. Paragraph-anchored
windows are deliberately not implemented.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus import Document
from .errors import SpanError, ValidationError
from .extract import Mention
from .textnorm import sentence_span

MODE_WORDS = "words"
MODE_SENTENCE = "sentence"
MODE_FULL = "full"
MODES = (MODE_WORDS, MODE_SENTENCE, MODE_FULL)

_WORD_RE = re.compile(r"\S+")


@dataclass(frozen=True)
class ContextWindow:
    doc_id: str
    start: int
    end: int
    window_text: str
    window_start: int
    window_end: int
    mode: str
    size_words: int | None
    mention_start_in_window: int
    mention_end_in_window: int

    @property
    def surface(self) -> str:
        return self.window_text[self.mention_start_in_window:self.mention_end_in_window]


def extract_window(
    doc: Document,
    mention: Mention,
    mode: str = MODE_FULL,
    size_words: int | None = None,
) -> ContextWindow:
    """Cut the context window for one mention.

    words mode keeps up to ceil(size_words/2) words on each side of the
    mention; when the kept range reaches the first or last word of the
    document the window extends to the text edge, so any size at least the
    document word count reproduces full mode exactly.
    """
    if mode not in MODES:
        raise ValidationError(f"unknown context mode {mode!r}")
    text = doc.text
    if mention.doc_id != doc.doc_id:
        raise SpanError(f"mention {mention.key} does not belong to document {doc.doc_id}")
    if not (0 <= mention.start < mention.end <= len(text)):
        raise SpanError(f"mention span {mention.key} out of bounds for {doc.doc_id}")
    if text[mention.start:mention.end] != mention.surface:
        raise SpanError(f"mention {mention.key} surface does not match document text")

    if mode == MODE_FULL:
        window_start, window_end = 0, len(text)
    elif mode == MODE_SENTENCE:
        window_start, window_end = sentence_span(text, mention.start)
        # a mention straddling a sentence terminator widens the window
        # minimally so the invariant window contains mention always holds
        window_start = min(window_start, mention.start)
        window_end = max(window_end, mention.end)
    else:
        if size_words is None or size_words < 1:
            raise ValidationError("words mode requires size_words >= 1")
        words = [(m.start(), m.end()) for m in _WORD_RE.finditer(text)]
        if not words:
            window_start, window_end = 0, len(text)
        else:
            first_idx = 0
            for idx, (ws, we) in enumerate(words):
                if we > mention.start:
                    first_idx = idx
                    break
            else:
                first_idx = len(words) - 1
            last_idx = first_idx
            for idx in range(first_idx, len(words)):
                if words[idx][0] < mention.end:
                    last_idx = idx
                else:
                    break
            half = (size_words + 1) // 2
            left_idx = max(0, first_idx - half)
            right_idx = min(len(words) - 1, last_idx + half)
            window_start = 0 if left_idx == 0 else words[left_idx][0]
            window_end = len(text) if right_idx == len(words) - 1 else words[right_idx][1]
            window_start = min(window_start, mention.start)
            window_end = max(window_end, mention.end)

    return ContextWindow(
        doc_id=doc.doc_id,
        start=mention.start,
        end=mention.end,
        window_text=text[window_start:window_end],
        window_start=window_start,
        window_end=window_end,
        mode=mode,
        size_words=size_words if mode == MODE_WORDS else None,
        mention_start_in_window=mention.start - window_start,
        mention_end_in_window=mention.end - window_start,
    )
