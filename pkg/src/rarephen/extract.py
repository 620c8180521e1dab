"""Dictionary-based mention extraction.

The production matcher scans each document once: the document is case-folded
and tokenized a single time (both C-speed string operations), candidate
positions are located through a hash index keyed by each term's leading
token, and only those positions pay for full verification. Cost is therefore
O(text) plus work proportional to candidate hits, independent of vocabulary
size -- per-term scanning over a ~331k-document corpus would not scale.

``naive_scan_oracle`` is the deliberately simple per-term reference
implementation kept as the test oracle; it shares no scanning or selection
code with the production path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, Document, canonical_json_line, validate_span
from .errors import ParseError, WiringError
from .textnorm import (
    NORMALIZATION_VERSION,
    TERM_KIND_ABBREVIATION,
    fold_text,
    leading_alnum_run,
    token_set,
)
from .vocab import CompiledVocabulary

MATCHER_VERSION = f"scan-1/{NORMALIZATION_VERSION}"

MENTION_FIELDS = ("doc_id", "start", "end", "surface", "ordo_id", "cui", "term_kind")


@dataclass(frozen=True)
class Mention:
    doc_id: str
    start: int
    end: int
    surface: str
    ordo_id: str
    cui: str
    term_kind: str
    matcher_version: str = MATCHER_VERSION

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.doc_id, self.start, self.end)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "start": self.start,
            "end": self.end,
            "surface": self.surface,
            "ordo_id": self.ordo_id,
            "cui": self.cui,
            "term_kind": self.term_kind,
        }


# Candidate tuple layout: (start, end, abbrev_rank, ordo_id, cui, kind)
def _select_non_overlapping(candidates: list[tuple]) -> list[tuple]:
    """Overlap policy: longest match, then earliest start, then
    non-abbreviation kind, then (ordo_id, cui) for a total order."""
    ranked = sorted(candidates, key=lambda c: (c[0] - c[1], c[0], c[2], c[3], c[4], c[5]))
    accepted: list[tuple] = []
    for cand in ranked:
        s, e = cand[0], cand[1]
        if all(e <= a[0] or s >= a[1] for a in accepted):
            accepted.append(cand)
    accepted.sort(key=lambda c: c[0])
    return accepted


class TermMatcher:
    """Single-pass multi-pattern scanner over a compiled vocabulary."""

    def __init__(self, vocab: CompiledVocabulary):
        self._first_index: dict[str, list[tuple]] = {}
        self._irregular: list[tuple] = []
        for term, entries in vocab.term_index.items():
            folded = fold_text(term)
            for concept_idx, kind in entries:
                concept = vocab.concepts[concept_idx]
                require_raw = term if kind == TERM_KIND_ABBREVIATION else None
                entry = (folded, require_raw, len(term), kind, concept.ordo_id, concept.cui)
                first = leading_alnum_run(folded)
                if first:
                    self._first_index.setdefault(first, []).append(entry)
                else:
                    # terms not starting with an alphanumeric code point are
                    # vanishingly rare; scan them individually
                    self._irregular.append(entry)
        entry_key = lambda e: (e[0], e[1] or "", e[2], e[3], e[4], e[5])  # noqa: E731
        for bucket in self._first_index.values():
            bucket.sort(key=entry_key)
        self._irregular.sort(key=entry_key)
        self._first_keys = frozenset(self._first_index)

    def match(self, doc: Document) -> list[Mention]:
        text = doc.text
        n = len(text)
        folded = fold_text(text)
        candidates: list[tuple] = []

        present = token_set(folded).intersection(self._first_keys)
        for tok in sorted(present):
            pos = 0
            find = folded.find
            while True:
                i = find(tok, pos)
                if i < 0:
                    break
                pos = i + 1
                if i > 0 and folded[i - 1].isalnum():
                    continue
                for folded_term, require_raw, length, kind, ordo_id, cui in self._first_index[tok]:
                    j = i + length
                    if not folded.startswith(folded_term, i):
                        continue
                    if j < n and folded[j].isalnum():
                        continue
                    if require_raw is not None and not text.startswith(require_raw, i):
                        continue
                    candidates.append(
                        (i, j, 1 if kind == TERM_KIND_ABBREVIATION else 0, ordo_id, cui, kind)
                    )

        for folded_term, require_raw, length, kind, ordo_id, cui in self._irregular:
            pos = 0
            while True:
                i = folded.find(folded_term, pos)
                if i < 0:
                    break
                pos = i + 1
                j = i + length
                if i > 0 and folded[i - 1].isalnum():
                    continue
                if j < n and folded[j].isalnum():
                    continue
                if require_raw is not None and not text.startswith(require_raw, i):
                    continue
                candidates.append(
                    (i, j, 1 if kind == TERM_KIND_ABBREVIATION else 0, ordo_id, cui, kind)
                )

        accepted = _select_non_overlapping(candidates)
        return [
            Mention(
                doc_id=doc.doc_id,
                start=s,
                end=e,
                surface=text[s:e],
                ordo_id=ordo_id,
                cui=cui,
                term_kind=kind,
            )
            for s, e, _rank, ordo_id, cui, kind in accepted
        ]


def get_matcher(vocab: CompiledVocabulary) -> TermMatcher:
    """Matcher derived from (and cached on) an immutable vocabulary."""
    matcher = getattr(vocab, "_matcher", None)
    if matcher is None:
        matcher = TermMatcher(vocab)
        vocab._matcher = matcher  # derived cache; vocabulary data stays immutable
    return matcher


def find_mentions(doc: Document, vocab: CompiledVocabulary) -> list[Mention]:
    """Every maximal non-overlapping vocabulary match in one document.

    Non-abbreviation terms match case-insensitively, abbreviations
    case-sensitively; both match edges must sit on word boundaries.
    """
    return get_matcher(vocab).match(doc)


def filter_to_rare(
    mentions: Sequence[Mention],
    vocab: CompiledVocabulary,
    rare_cuis: Iterable[str] | None = None,
) -> list[Mention]:
    """Keep only mentions normalized to the rare-disease concept set.

    With the default ``rare_cuis`` (every cui in ``vocab``) this is an
    identity pass; pass an explicit subset when a broader clinical
    vocabulary was used upstream. A mention whose cui is missing from
    ``vocab`` entirely indicates a pipeline wiring bug and raises.
    """
    rare = set(rare_cuis) if rare_cuis is not None else None
    kept = []
    for mention in mentions:
        if not vocab.has_cui(mention.cui):
            raise WiringError(
                f"mention {mention.key} has cui {mention.cui!r} absent from the vocabulary"
            )
        if rare is None or mention.cui in rare:
            kept.append(mention)
    return kept


def naive_scan_oracle(doc: Document, vocab: CompiledVocabulary) -> list[Mention]:
    """Brute-force reference matcher: O(terms x positions), test use only.

    Reimplements folding, boundary checks and the overlap policy without
    touching the production scanning code.
    """
    text = doc.text
    n = len(text)
    folded_chars = []
    for ch in text:
        low = ch.lower()
        folded_chars.append(low if len(low) == 1 else ch)
    folded = "".join(folded_chars)

    candidates: list[tuple] = []
    for idx, concept in enumerate(vocab.concepts):
        for term in concept.all_terms:
            abbrev = 1 <= len(term) <= 4 and term.isalpha() and term.isupper()
            if abbrev:
                hay, needle = text, term
            else:
                low_chars = []
                for ch in term:
                    low = ch.lower()
                    low_chars.append(low if len(low) == 1 else ch)
                hay, needle = folded, "".join(low_chars)
            kind = concept.term_kind(term)
            pos = 0
            while True:
                i = hay.find(needle, pos)
                if i < 0:
                    break
                pos = i + 1
                j = i + len(needle)
                if i > 0 and text[i - 1].isalnum():
                    continue
                if j < n and text[j].isalnum():
                    continue
                candidates.append((i, j, 1 if abbrev else 0, concept.ordo_id, concept.cui, kind))

    # same policy, independently restated: longest, leftmost, non-abbreviation,
    # then lexicographic concept identity
    order = sorted(
        candidates, key=lambda c: (-(c[1] - c[0]), c[0], c[2], c[3], c[4], c[5])
    )
    chosen: list[tuple] = []
    for cand in order:
        overlaps = False
        for kept in chosen:
            if not (cand[1] <= kept[0] or cand[0] >= kept[1]):
                overlaps = True
                break
        if not overlaps:
            chosen.append(cand)
    chosen.sort(key=lambda c: c[0])
    return [
        Mention(
            doc_id=doc.doc_id,
            start=s,
            end=e,
            surface=text[s:e],
            ordo_id=ordo_id,
            cui=cui,
            term_kind=kind,
        )
        for s, e, _rank, ordo_id, cui, kind in chosen
    ]


def write_mentions(mentions: Iterable[Mention], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for mention in mentions:
            fh.write(canonical_json_line(mention.to_dict()))


def load_mentions(path: str | Path, corpus: Corpus) -> list[Mention]:
    """Load mentions JSONL, revalidating every span against the corpus."""
    path = Path(path)
    mentions: list[Mention] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                doc = corpus.get(obj["doc_id"])
                validate_span(doc, obj["start"], obj["end"], obj["surface"])
                mentions.append(
                    Mention(
                        doc_id=obj["doc_id"],
                        start=obj["start"],
                        end=obj["end"],
                        surface=obj["surface"],
                        ordo_id=obj["ordo_id"],
                        cui=obj["cui"],
                        term_kind=obj["term_kind"],
                    )
                )
            except (KeyError, json.JSONDecodeError) as exc:
                raise ParseError(f"bad mention record: {exc}", path=str(path), line=lineno) from exc
    return mentions
