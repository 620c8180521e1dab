"""Rare-disease vocabulary: ontology table parsing, cross-vocabulary linking,
ICD code attachment, and compilation into an immutable matching index.

Source tables are small TSV subsets (see the README for the column layout);
the compiled vocabulary serializes to a single deterministic JSON file.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ParseError, ValidationError
from .textnorm import (
    NORMALIZATION_VERSION,
    TERM_KIND_ABBREVIATION,
    TERM_KIND_LABEL,
    TERM_KIND_SYNONYM,
    is_abbreviation_term,
    normalize_term,
)

VOCAB_FORMAT_VERSION = 1

# Disease-bearing UMLS semantic types used when no allowlist is given:
# Disease or Syndrome, Neoplastic Process, Congenital Abnormality.
DEFAULT_SEMANTIC_TYPES = frozenset({"T047", "T191", "T019"})

_CUI_RE = re.compile(r"^[A-Za-z][0-9]+$")

ORDO_HEADER = ["ordo_id", "label", "synonyms", "cui"]
UMLS_HEADER = ["cui", "term", "semantic_types", "definition"]
ICD_HEADER = ["cui", "icd9", "icd10"]


@dataclass(frozen=True)
class OrdoRecord:
    ordo_id: str
    preferred_label: str
    synonyms: tuple[str, ...]
    linked_cui: str | None = None


@dataclass(frozen=True)
class UmlsRecord:
    cui: str
    term: str
    semantic_types: tuple[str, ...]
    definition: str | None = None


@dataclass(frozen=True)
class IcdMapRecord:
    cui: str
    icd9: str | None = None
    icd10: str | None = None


@dataclass(frozen=True)
class RareDiseaseConcept:
    ordo_id: str
    cui: str
    preferred_label: str
    all_terms: tuple[str, ...]
    semantic_types: tuple[str, ...]
    definition: str | None = None
    icd9_codes: tuple[str, ...] = ()
    icd10_codes: tuple[str, ...] = ()

    def term_kind(self, term: str) -> str:
        """Kind of one of this concept's normalized terms.

        Abbreviation-shaped strings match case-sensitively regardless of
        where they came from; otherwise the preferred label is 'label' and
        everything else 'synonym'.
        """
        if is_abbreviation_term(term):
            return TERM_KIND_ABBREVIATION
        if term == normalize_term(self.preferred_label).text:
            return TERM_KIND_LABEL
        return TERM_KIND_SYNONYM


@dataclass
class LinkReport:
    """Outcome counts of ORDO-to-UMLS linking; linked + ambiguous + unlinked
    equals the ORDO input size."""

    linked: int = 0
    ambiguous: int = 0
    unlinked: int = 0
    unlinked_ordo_ids: list[str] = field(default_factory=list)
    ambiguous_ordo_ids: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.linked + self.ambiguous + self.unlinked

    def to_dict(self) -> dict:
        return {
            "linked": self.linked,
            "ambiguous": self.ambiguous,
            "unlinked": self.unlinked,
            "unlinked_ordo_ids": list(self.unlinked_ordo_ids),
            "ambiguous_ordo_ids": list(self.ambiguous_ordo_ids),
        }


def _read_tsv(path: str | Path, header: Sequence[str]) -> Iterable[tuple[int, list[str]]]:
    """Yield (1-based line number, columns) for each data row, header-checked."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file, expected a header row", path=str(path), line=1)
    got = lines[0].split("\t")
    if got != list(header):
        raise ParseError(
            f"bad header: expected {list(header)!r}, got {got!r}", path=str(path), line=1
        )
    for lineno, raw in enumerate(lines[1:], start=2):
        if raw == "":
            continue
        cols = raw.split("\t")
        if len(cols) != len(header):
            raise ParseError(
                f"expected {len(header)} tab-separated columns, got {len(cols)}",
                path=str(path),
                line=lineno,
            )
        yield lineno, cols


def parse_ordo_table(path: str | Path) -> list[OrdoRecord]:
    """Parse the ORDO subset table; row order is preserved."""
    records: list[OrdoRecord] = []
    seen: dict[str, int] = {}
    for lineno, (ordo_id, label, synonyms_col, cui) in _read_tsv(path, ORDO_HEADER):
        ordo_id = ordo_id.strip()
        label = label.strip()
        if not ordo_id:
            raise ParseError("empty ordo_id", path=str(path), line=lineno)
        if not label:
            raise ParseError("empty label", path=str(path), line=lineno)
        if ordo_id in seen:
            raise ValidationError(
                f"{path}: duplicate ordo_id {ordo_id!r} on lines {seen[ordo_id]} and {lineno}"
            )
        seen[ordo_id] = lineno
        synonyms: list[str] = []
        seen_norm: set[str] = set()
        for part in synonyms_col.split("|"):
            part = part.strip()
            if not part:
                continue
            norm = normalize_term(part).text
            if norm in seen_norm:
                continue
            seen_norm.add(norm)
            synonyms.append(part)
        cui = cui.strip()
        records.append(
            OrdoRecord(
                ordo_id=ordo_id,
                preferred_label=label,
                synonyms=tuple(synonyms),
                linked_cui=cui or None,
            )
        )
    return records


def parse_umls_table(path: str | Path) -> list[UmlsRecord]:
    """Parse the UMLS subset table; one record per (cui, term) row."""
    records: list[UmlsRecord] = []
    for lineno, (cui, term, types_col, definition) in _read_tsv(path, UMLS_HEADER):
        cui = cui.strip()
        term = term.strip()
        if not _CUI_RE.match(cui):
            raise ParseError(
                f"cui {cui!r} must be a letter followed by digits", path=str(path), line=lineno
            )
        if not term:
            raise ParseError("empty term", path=str(path), line=lineno)
        semantic_types = tuple(t.strip() for t in types_col.split(",") if t.strip())
        records.append(
            UmlsRecord(
                cui=cui,
                term=term,
                semantic_types=semantic_types,
                definition=definition.strip() or None,
            )
        )
    return records


def parse_icd_map(path: str | Path) -> list[IcdMapRecord]:
    """Parse the CUI-to-ICD map; each row needs at least one code."""
    records: list[IcdMapRecord] = []
    for lineno, (cui, icd9, icd10) in _read_tsv(path, ICD_HEADER):
        cui = cui.strip()
        icd9 = icd9.strip()
        icd10 = icd10.strip()
        if not _CUI_RE.match(cui):
            raise ParseError(
                f"cui {cui!r} must be a letter followed by digits", path=str(path), line=lineno
            )
        if not icd9 and not icd10:
            raise ParseError("row has neither an icd9 nor an icd10 code", path=str(path), line=lineno)
        records.append(IcdMapRecord(cui=cui, icd9=icd9 or None, icd10=icd10 or None))
    return records


def _ordo_term_set(record: OrdoRecord) -> set[str]:
    terms = {normalize_term(record.preferred_label).text}
    terms.update(normalize_term(s).text for s in record.synonyms)
    terms.discard("")
    return terms


def link_ordo_to_umls(
    ordo: Sequence[OrdoRecord],
    umls: Sequence[UmlsRecord],
    allowed_semantic_types: Iterable[str] = DEFAULT_SEMANTIC_TYPES,
) -> tuple[list[RareDiseaseConcept], LinkReport]:
    """Link each ORDO record to a UMLS concept and merge their terms.

    A pre-declared cui on the ORDO record wins outright. Otherwise
    candidates are cuis sharing at least one normalized term and at least
    one allowed semantic type; ties prefer a cui matching the preferred
    label, then the lexicographically smallest cui (counted as ambiguous).
    Unlinked records are reported and excluded from the output.
    """
    allowed = set(allowed_semantic_types)
    if not allowed:
        raise ValidationError("allowed_semantic_types must be non-empty")

    cui_terms: dict[str, set[str]] = {}
    cui_types: dict[str, set[str]] = {}
    cui_definition: dict[str, str] = {}
    for rec in umls:
        cui_terms.setdefault(rec.cui, set()).add(normalize_term(rec.term).text)
        cui_types.setdefault(rec.cui, set()).update(rec.semantic_types)
        if rec.definition and rec.cui not in cui_definition:
            cui_definition[rec.cui] = rec.definition

    concepts: list[RareDiseaseConcept] = []
    report = LinkReport()
    for rec in ordo:
        rec_terms = _ordo_term_set(rec)
        label_norm = normalize_term(rec.preferred_label).text
        if rec.linked_cui:
            cui = rec.linked_cui
            report.linked += 1
        else:
            candidates = sorted(
                c
                for c, terms in cui_terms.items()
                if terms & rec_terms and cui_types.get(c, set()) & allowed
            )
            if not candidates:
                report.unlinked += 1
                report.unlinked_ordo_ids.append(rec.ordo_id)
                continue
            if len(candidates) == 1:
                cui = candidates[0]
                report.linked += 1
            else:
                label_matches = [c for c in candidates if label_norm in cui_terms[c]]
                if len(label_matches) == 1:
                    cui = label_matches[0]
                    report.linked += 1
                else:
                    # resolved deterministically but recorded as ambiguous
                    cui = (label_matches or candidates)[0]
                    report.ambiguous += 1
                    report.ambiguous_ordo_ids.append(rec.ordo_id)

        all_terms = set(rec_terms)
        all_terms.update(cui_terms.get(cui, set()))
        all_terms.discard("")
        concepts.append(
            RareDiseaseConcept(
                ordo_id=rec.ordo_id,
                cui=cui,
                preferred_label=rec.preferred_label,
                all_terms=tuple(sorted(all_terms)),
                semantic_types=tuple(sorted(cui_types.get(cui, set()))),
                definition=cui_definition.get(cui),
            )
        )
    return concepts, report


def attach_icd_codes(
    concepts: Sequence[RareDiseaseConcept], icd_map: Sequence[IcdMapRecord]
) -> list[RareDiseaseConcept]:
    """Attach deduplicated, sorted ICD-9/ICD-10 codes by cui equality."""
    by_cui9: dict[str, set[str]] = {}
    by_cui10: dict[str, set[str]] = {}
    for rec in icd_map:
        if rec.icd9:
            by_cui9.setdefault(rec.cui, set()).add(rec.icd9)
        if rec.icd10:
            by_cui10.setdefault(rec.cui, set()).add(rec.icd10)
    out = []
    for concept in concepts:
        out.append(
            RareDiseaseConcept(
                ordo_id=concept.ordo_id,
                cui=concept.cui,
                preferred_label=concept.preferred_label,
                all_terms=concept.all_terms,
                semantic_types=concept.semantic_types,
                definition=concept.definition,
                icd9_codes=tuple(sorted(by_cui9.get(concept.cui, set()))),
                icd10_codes=tuple(sorted(by_cui10.get(concept.cui, set()))),
            )
        )
    return out


class CompiledVocabulary:
    """Immutable term index over a concept list.

    term_index maps every normalized term to the [(concept index, kind)]
    pairs that carry it; shared terms (the classic ambiguous-abbreviation
    case) map to several concepts and are disambiguated at match time.
    """

    def __init__(
        self,
        concepts: Sequence[RareDiseaseConcept],
        term_index: Mapping[str, Sequence[tuple[int, str]]],
        build_meta: Mapping[str, object],
    ):
        self.concepts: tuple[RareDiseaseConcept, ...] = tuple(concepts)
        self.term_index: dict[str, tuple[tuple[int, str], ...]] = {
            term: tuple((int(i), str(k)) for i, k in entries)
            for term, entries in term_index.items()
        }
        self.build_meta: dict[str, object] = dict(build_meta)
        self._cui_set = frozenset(c.cui for c in self.concepts)
        self._by_key = {(c.ordo_id, c.cui): c for c in self.concepts}

    def __len__(self) -> int:
        return len(self.concepts)

    def __getstate__(self) -> dict:
        # the derived matcher cache is rebuilt on demand, never pickled
        state = dict(self.__dict__)
        state.pop("_matcher", None)
        return state

    def has_cui(self, cui: str) -> bool:
        return cui in self._cui_set

    def concept_for(self, ordo_id: str, cui: str) -> RareDiseaseConcept | None:
        return self._by_key.get((ordo_id, cui))

    def to_dict(self) -> dict:
        return {
            "format_version": VOCAB_FORMAT_VERSION,
            "build_meta": self.build_meta,
            "concepts": [
                {
                    "ordo_id": c.ordo_id,
                    "cui": c.cui,
                    "preferred_label": c.preferred_label,
                    "all_terms": list(c.all_terms),
                    "semantic_types": list(c.semantic_types),
                    "definition": c.definition,
                    "icd9_codes": list(c.icd9_codes),
                    "icd10_codes": list(c.icd10_codes),
                }
                for c in self.concepts
            ],
            "term_index": {
                term: [[i, k] for i, k in entries]
                for term, entries in sorted(self.term_index.items())
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=1) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_dict(cls, data: Mapping) -> "CompiledVocabulary":
        if data.get("format_version") != VOCAB_FORMAT_VERSION:
            raise ValidationError(
                f"unsupported vocabulary format_version {data.get('format_version')!r}"
            )
        concepts = [
            RareDiseaseConcept(
                ordo_id=c["ordo_id"],
                cui=c["cui"],
                preferred_label=c["preferred_label"],
                all_terms=tuple(c["all_terms"]),
                semantic_types=tuple(c["semantic_types"]),
                definition=c.get("definition"),
                icd9_codes=tuple(c.get("icd9_codes", ())),
                icd10_codes=tuple(c.get("icd10_codes", ())),
            )
            for c in data["concepts"]
        ]
        term_index = {
            term: tuple((int(i), str(k)) for i, k in entries)
            for term, entries in data["term_index"].items()
        }
        return cls(concepts, term_index, data.get("build_meta", {}))

    @classmethod
    def load(cls, path: str | Path) -> "CompiledVocabulary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def compile_vocabulary(
    concepts: Sequence[RareDiseaseConcept],
    source_digests: Mapping[str, str] | None = None,
) -> CompiledVocabulary:
    """Build the immutable matching vocabulary.

    Pure function of its inputs: identical concepts and digests serialize
    byte-identically.
    """
    if not concepts:
        raise ValidationError("cannot compile an empty concept list")
    term_index: dict[str, list[tuple[int, str]]] = {}
    for idx, concept in enumerate(concepts):
        if not concept.all_terms:
            raise ValidationError(f"concept {concept.ordo_id} has no terms")
        label_norm = normalize_term(concept.preferred_label).text
        if label_norm not in concept.all_terms:
            raise ValidationError(
                f"concept {concept.ordo_id}: all_terms must contain its normalized label"
            )
        for term in concept.all_terms:
            if not term:
                raise ValidationError(f"concept {concept.ordo_id}: empty term")
            if normalize_term(term).text != term:
                raise ValidationError(
                    f"concept {concept.ordo_id}: term {term!r} is not normalized"
                )
            term_index.setdefault(term, []).append((idx, concept.term_kind(term)))
    for entries in term_index.values():
        entries.sort()
    concept_digest = hashlib.sha256(
        json.dumps(
            [[c.ordo_id, c.cui, list(c.all_terms)] for c in concepts],
            sort_keys=True,
            ensure_ascii=False,
        ).encode("utf-8")
    ).hexdigest()
    build_meta = {
        "normalization_version": NORMALIZATION_VERSION,
        "concept_digest": concept_digest,
        "source_digests": dict(sorted((source_digests or {}).items())),
        "concept_count": len(concepts),
        "term_count": len(term_index),
    }
    return CompiledVocabulary(concepts, term_index, build_meta)


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_vocabulary(
    ordo_path: str | Path,
    umls_path: str | Path,
    icd_path: str | Path | None,
    allowed_semantic_types: Iterable[str] = DEFAULT_SEMANTIC_TYPES,
) -> tuple[CompiledVocabulary, LinkReport]:
    """End-to-end: parse the three source tables, link, attach, compile."""
    ordo = parse_ordo_table(ordo_path)
    umls = parse_umls_table(umls_path)
    concepts, report = link_ordo_to_umls(ordo, umls, allowed_semantic_types)
    if icd_path is not None:
        concepts = attach_icd_codes(concepts, parse_icd_map(icd_path))
    digests = {
        "ordo": file_digest(ordo_path),
        "umls": file_digest(umls_path),
    }
    if icd_path is not None:
        digests["icd"] = file_digest(icd_path)
    vocab = compile_vocabulary(concepts, digests)
    return vocab, report
