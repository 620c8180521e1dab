"""Clinical document corpus, structured ICD diagnoses, and gold labels.

Everything is file-backed (JSONL / TSV) and loaded into immutable in-memory
structures. Offsets follow the package-wide convention: 0-based,
end-exclusive, Unicode code points. Span validity is checked on every load
path so no invalid GoldLabel can circulate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ParseError, SpanError, ValidationError

GOLD_TRUE = "true_mention"
GOLD_FALSE = "false_mention"
GOLD_LABELS = {GOLD_TRUE, GOLD_FALSE}
GOLD_SOURCES = {"annotator_a", "annotator_b", "adjudicated"}

ICD_SYSTEMS = {"icd9", "icd10"}

DOCUMENT_FIELDS = {"doc_id", "patient_id", "text"}


def canonical_json_line(obj: dict) -> str:
    """One deterministic JSONL line (sorted keys, no trailing spaces)."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"


@dataclass(frozen=True)
class Document:
    doc_id: str
    patient_id: str
    text: str
    word_count: int

    @classmethod
    def create(cls, doc_id: str, patient_id: str, text: str) -> "Document":
        if not doc_id:
            raise ValidationError("doc_id must be non-empty")
        if not patient_id:
            raise ValidationError(f"document {doc_id}: patient_id must be non-empty")
        if not text:
            raise ValidationError(f"document {doc_id}: text must be non-empty")
        # word_count is always recomputed, never trusted from input
        return cls(doc_id=doc_id, patient_id=patient_id, text=text, word_count=len(text.split()))

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "patient_id": self.patient_id, "text": self.text}


class Corpus:
    """Immutable set of documents indexed by doc_id; iterates in doc_id order."""

    def __init__(self, documents: Iterable[Document]):
        self._docs: dict[str, Document] = {}
        for doc in documents:
            if doc.doc_id in self._docs:
                raise ValidationError(f"duplicate doc_id {doc.doc_id!r}")
            self._docs[doc.doc_id] = doc
        self._order = sorted(self._docs)

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self) -> Iterator[Document]:
        for doc_id in self._order:
            yield self._docs[doc_id]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def get(self, doc_id: str) -> Document:
        try:
            return self._docs[doc_id]
        except KeyError:
            raise ValidationError(f"unknown doc_id {doc_id!r}") from None

    def doc_ids(self) -> list[str]:
        return list(self._order)

    def patient_of(self, doc_id: str) -> str:
        return self.get(doc_id).patient_id

    def stats(self) -> dict:
        counts = [d.word_count for d in self]
        if not counts:
            return {"count": 0, "min_words": 0, "mean_words": 0.0, "max_words": 0}
        return {
            "count": len(counts),
            "min_words": min(counts),
            "mean_words": sum(counts) / len(counts),
            "max_words": max(counts),
        }


def load_documents(path: str | Path) -> Corpus:
    """Load a documents JSONL file (fields exactly doc_id, patient_id, text)."""
    path = Path(path)
    docs: list[Document] = []
    seen: dict[str, int] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", path=str(path), line=lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("each line must be a JSON object", path=str(path), line=lineno)
            missing = DOCUMENT_FIELDS - obj.keys()
            if missing:
                raise ParseError(
                    f"missing required field(s): {', '.join(sorted(missing))}",
                    path=str(path),
                    line=lineno,
                )
            extra = obj.keys() - DOCUMENT_FIELDS
            if extra:
                raise ParseError(
                    f"unexpected field(s): {', '.join(sorted(extra))}", path=str(path), line=lineno
                )
            if not all(isinstance(obj[k], str) for k in DOCUMENT_FIELDS):
                raise ParseError("doc_id, patient_id and text must be strings",
                                 path=str(path), line=lineno)
            if obj["doc_id"] in seen:
                raise ValidationError(
                    f"{path}: duplicate doc_id {obj['doc_id']!r} "
                    f"(lines {seen[obj['doc_id']]} and {lineno})"
                )
            seen[obj["doc_id"]] = lineno
            try:
                docs.append(Document.create(obj["doc_id"], obj["patient_id"], obj["text"]))
            except ValidationError as exc:
                raise ParseError(str(exc), path=str(path), line=lineno) from exc
    return Corpus(docs)


def write_documents(corpus: Corpus, path: str | Path) -> None:
    """Persist a corpus canonically (doc_id order, sorted keys)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc in corpus:
            fh.write(canonical_json_line(doc.to_dict()))


@dataclass(frozen=True)
class IcdDiagnosisRecord:
    patient_id: str
    code: str
    system: str


class DiagnosisTable:
    """Patient-to-ICD-code table with a by-code reverse index."""

    def __init__(self, records: Iterable[IcdDiagnosisRecord]):
        self.records: list[IcdDiagnosisRecord] = list(records)
        self.by_patient: dict[str, list[IcdDiagnosisRecord]] = {}
        self.by_code: dict[str, list[IcdDiagnosisRecord]] = {}
        for rec in self.records:
            self.by_patient.setdefault(rec.patient_id, []).append(rec)
            self.by_code.setdefault(rec.code, []).append(rec)

    def __len__(self) -> int:
        return len(self.records)


def load_icd_diagnoses(path: str | Path) -> DiagnosisTable:
    """Load the patient diagnosis TSV (header patient_id, code, system)."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file, expected a header row", path=str(path), line=1)
    header = lines[0].split("\t")
    if header != ["patient_id", "code", "system"]:
        raise ParseError(f"bad header: {header!r}", path=str(path), line=1)
    records = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if raw == "":
            continue
        cols = raw.split("\t")
        if len(cols) != 3:
            raise ParseError(f"expected 3 columns, got {len(cols)}", path=str(path), line=lineno)
        patient_id, code, system = (c.strip() for c in cols)
        if not patient_id:
            raise ParseError("empty patient_id", path=str(path), line=lineno)
        if not code:
            raise ParseError("empty code", path=str(path), line=lineno)
        if system not in ICD_SYSTEMS:
            raise ParseError(
                f"unknown system {system!r} (expected icd9 or icd10)", path=str(path), line=lineno
            )
        records.append(IcdDiagnosisRecord(patient_id=patient_id, code=code, system=system))
    return DiagnosisTable(records)


def write_icd_diagnoses(table: DiagnosisTable, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("patient_id\tcode\tsystem\n")
        for rec in table.records:
            fh.write(f"{rec.patient_id}\t{rec.code}\t{rec.system}\n")


@dataclass(frozen=True)
class GoldLabel:
    doc_id: str
    start: int
    end: int
    surface: str
    label: str
    source: str

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.doc_id, self.start, self.end)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "start": self.start,
            "end": self.end,
            "surface": self.surface,
            "label": self.label,
            "source": self.source,
        }


def validate_span(doc: Document, start: int, end: int, surface: str) -> None:
    """Reject any span that does not exactly address ``surface`` in ``doc``."""
    if not (isinstance(start, int) and isinstance(end, int)):
        raise SpanError(f"{doc.doc_id}: offsets must be integers")
    if not (0 <= start < end <= len(doc.text)):
        raise SpanError(
            f"{doc.doc_id}: span ({start}, {end}) out of bounds for text of length {len(doc.text)}"
        )
    actual = doc.text[start:end]
    if actual != surface:
        raise SpanError(
            f"{doc.doc_id}: surface mismatch at ({start}, {end}): "
            f"expected {surface!r}, text reads {actual!r}"
        )


def make_gold_label(
    corpus: Corpus, doc_id: str, start: int, end: int, surface: str, label: str, source: str
) -> GoldLabel:
    doc = corpus.get(doc_id)
    validate_span(doc, start, end, surface)
    if label not in GOLD_LABELS:
        raise ValidationError(f"unknown gold label {label!r}")
    if source not in GOLD_SOURCES:
        raise ValidationError(f"unknown gold source {source!r}")
    return GoldLabel(doc_id=doc_id, start=start, end=end, surface=surface, label=label, source=source)


def load_gold_labels(path: str | Path, corpus: Corpus) -> list[GoldLabel]:
    """Load gold labels, validating every span against its document."""
    path = Path(path)
    labels: list[GoldLabel] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", path=str(path), line=lineno) from exc
            try:
                labels.append(
                    make_gold_label(
                        corpus,
                        obj["doc_id"],
                        obj["start"],
                        obj["end"],
                        obj["surface"],
                        obj["label"],
                        obj["source"],
                    )
                )
            except KeyError as exc:
                raise ParseError(f"missing field {exc}", path=str(path), line=lineno) from exc
            except (SpanError, ValidationError) as exc:
                raise ParseError(str(exc), path=str(path), line=lineno) from exc
    return labels


def write_gold_labels(labels: Iterable[GoldLabel], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for label in labels:
            fh.write(canonical_json_line(label.to_dict()))
