"""Patient-level aggregation: free-text findings versus structured ICD codes.

A patient counts for a disease on the NLP route given at least
``min_mentions`` true-verdict mentions (default 1), and on the ICD route
when any of their diagnosis codes matches the concept's attached codes by
exact string equality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import GOLD_TRUE, Corpus, DiagnosisTable
from .errors import WiringError
from .extract import Mention
from .llmfilter import Verdict
from .vocab import CompiledVocabulary

CAT_NLP_ONLY = "nlp_only"
CAT_ICD_ONLY = "icd_only"
CAT_NLP_GT_ICD = "nlp_gt_icd"
CAT_OVERLAP = "icd_ge_nlp_overlap"
CATEGORIES = (CAT_NLP_ONLY, CAT_ICD_ONLY, CAT_NLP_GT_ICD, CAT_OVERLAP)


def categorize(nlp_count: int, icd_count: int) -> str:
    """Pure function of the two patient counts."""
    if icd_count == 0 and nlp_count > 0:
        return CAT_NLP_ONLY
    if nlp_count == 0 and icd_count > 0:
        return CAT_ICD_ONLY
    if 0 < icd_count < nlp_count:
        return CAT_NLP_GT_ICD
    return CAT_OVERLAP


EVIDENCE_NLP = "nlp"
EVIDENCE_ICD = "icd"
EVIDENCE_BOTH = "both"


@dataclass(frozen=True)
class PatientDiseaseAssignment:
    """One (patient, disease) pair with the evidence that produced it."""

    patient_id: str
    ordo_id: str
    evidence: str  # nlp | icd | both
    supporting_mentions: tuple[tuple[str, int, int], ...] = ()
    matched_codes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.evidence in (EVIDENCE_NLP, EVIDENCE_BOTH) and not self.supporting_mentions:
            raise WiringError(
                f"{self.patient_id}/{self.ordo_id}: nlp evidence requires supporting mentions"
            )
        if self.evidence in (EVIDENCE_ICD, EVIDENCE_BOTH) and not self.matched_codes:
            raise WiringError(
                f"{self.patient_id}/{self.ordo_id}: icd evidence requires matched codes"
            )


@dataclass(frozen=True)
class CohortRow:
    ordo_id: str
    label: str
    nlp_patients: int
    icd_patients: int
    both_patients: int
    category: str


@dataclass
class CohortReport:
    rows: list[CohortRow]
    totals: dict = field(default_factory=dict)

    def to_totals_dict(self) -> dict:
        return dict(self.totals)


def aggregate_nlp_patients(
    verdicts: Sequence[Verdict],
    mentions: Sequence[Mention],
    corpus: Corpus,
    min_mentions: int = 1,
) -> dict[str, set[str]]:
    """ordo_id -> set of patients with enough true-verdict mentions."""
    mention_by_key = {m.key: m for m in mentions}
    hits: dict[tuple[str, str], int] = {}
    for verdict in verdicts:
        if verdict.label != GOLD_TRUE:
            continue
        mention = mention_by_key.get(verdict.key)
        if mention is None:
            raise WiringError(f"verdict {verdict.key} has no matching mention")
        patient = corpus.patient_of(mention.doc_id)
        key = (mention.ordo_id, patient)
        hits[key] = hits.get(key, 0) + 1
    out: dict[str, set[str]] = {}
    for (ordo_id, patient), count in hits.items():
        if count >= min_mentions:
            out.setdefault(ordo_id, set()).add(patient)
    return out


def aggregate_icd_patients(
    diagnoses: DiagnosisTable,
    vocab: CompiledVocabulary,
) -> tuple[dict[str, set[str]], int]:
    """ordo_id -> patient set via exact code equality; also the count of
    diagnosis rows whose code matched no concept (the leftover report)."""
    code_to_ordo: dict[str, set[str]] = {}
    for concept in vocab.concepts:
        for code in (*concept.icd9_codes, *concept.icd10_codes):
            code_to_ordo.setdefault(code.strip(), set()).add(concept.ordo_id)
    out: dict[str, set[str]] = {}
    leftover = 0
    for rec in diagnoses.records:
        targets = code_to_ordo.get(rec.code.strip())
        if not targets:
            leftover += 1
            continue
        for ordo_id in targets:
            out.setdefault(ordo_id, set()).add(rec.patient_id)
    return out, leftover


def patient_assignments(
    verdicts: Sequence[Verdict],
    mentions: Sequence[Mention],
    corpus: Corpus,
    diagnoses: DiagnosisTable,
    vocab: CompiledVocabulary,
    min_mentions: int = 1,
) -> list[PatientDiseaseAssignment]:
    """Per-(patient, disease) assignments with their supporting evidence."""
    mention_by_key = {m.key: m for m in mentions}
    support: dict[tuple[str, str], list[tuple[str, int, int]]] = {}
    for verdict in verdicts:
        if verdict.label != GOLD_TRUE:
            continue
        mention = mention_by_key.get(verdict.key)
        if mention is None:
            raise WiringError(f"verdict {verdict.key} has no matching mention")
        patient = corpus.patient_of(mention.doc_id)
        support.setdefault((patient, mention.ordo_id), []).append(mention.key)
    nlp_pairs = {pair for pair, keys in support.items() if len(keys) >= min_mentions}

    code_to_ordo: dict[str, set[str]] = {}
    for concept in vocab.concepts:
        for code in (*concept.icd9_codes, *concept.icd10_codes):
            code_to_ordo.setdefault(code.strip(), set()).add(concept.ordo_id)
    codes: dict[tuple[str, str], set[str]] = {}
    for rec in diagnoses.records:
        for ordo_id in code_to_ordo.get(rec.code.strip(), ()):
            codes.setdefault((rec.patient_id, ordo_id), set()).add(rec.code.strip())

    assignments = []
    for patient, ordo_id in sorted(nlp_pairs | set(codes)):
        pair = (patient, ordo_id)
        has_nlp = pair in nlp_pairs
        has_icd = pair in codes
        evidence = EVIDENCE_BOTH if has_nlp and has_icd else (
            EVIDENCE_NLP if has_nlp else EVIDENCE_ICD
        )
        assignments.append(
            PatientDiseaseAssignment(
                patient_id=patient,
                ordo_id=ordo_id,
                evidence=evidence,
                supporting_mentions=tuple(sorted(support.get(pair, ()))),
                matched_codes=tuple(sorted(codes.get(pair, ()))),
            )
        )
    return assignments


def compare_nlp_vs_icd(
    nlp_map: Mapping[str, set[str]],
    icd_map: Mapping[str, set[str]],
    vocab: CompiledVocabulary,
    leftover_codes: int = 0,
) -> CohortReport:
    """One row per disease seen on either route, with category totals."""
    label_by_ordo = {c.ordo_id: c.preferred_label for c in vocab.concepts}
    rows = []
    all_patients: set[str] = set()
    for ordo_id in set(nlp_map) | set(icd_map):
        nlp_set = nlp_map.get(ordo_id, set())
        icd_set = icd_map.get(ordo_id, set())
        all_patients |= nlp_set | icd_set
        rows.append(
            CohortRow(
                ordo_id=ordo_id,
                label=label_by_ordo.get(ordo_id, ""),
                nlp_patients=len(nlp_set),
                icd_patients=len(icd_set),
                both_patients=len(nlp_set & icd_set),
                category=categorize(len(nlp_set), len(icd_set)),
            )
        )
    rows.sort(key=lambda r: (-r.nlp_patients, r.ordo_id))
    totals = {
        "distinct_diseases": len(rows),
        "distinct_patients": len(all_patients),
        "categories": {cat: sum(1 for r in rows if r.category == cat) for cat in CATEGORIES},
        "unmatched_diagnosis_rows": leftover_codes,
    }
    return CohortReport(rows=rows, totals=totals)


def write_cohort_report(report: CohortReport, csv_path: str | Path, totals_path: str | Path) -> None:
    lines = ["ordo_id,label,nlp_patients,icd_patients,both_patients,category"]
    for r in report.rows:
        label = r.label.replace('"', '""')
        if "," in label or '"' in r.label:
            label = f'"{label}"'
        lines.append(
            f"{r.ordo_id},{label},{r.nlp_patients},{r.icd_patients},{r.both_patients},{r.category}"
        )
    Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    Path(totals_path).write_text(
        json.dumps(report.to_totals_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
