"""Shared test fixtures: a small hand-built vocabulary and curated documents."""

from __future__ import annotations

import random

import pytest

from rarephen.corpus import Corpus, Document
from rarephen.vocab import (
    CompiledVocabulary,
    RareDiseaseConcept,
    compile_vocabulary,
)

ALS_TERM = "Amyotrophic Lateral Sclerosis"
ALS_START, ALS_END = 111, 140


def make_concept(
    ordo_id: str,
    cui: str,
    label: str,
    extra_terms: tuple[str, ...] = (),
    definition: str | None = None,
    icd9: tuple[str, ...] = (),
    icd10: tuple[str, ...] = (),
) -> RareDiseaseConcept:
    from rarephen.textnorm import normalize_term

    terms = {normalize_term(label).text}
    terms.update(normalize_term(t).text for t in extra_terms)
    return RareDiseaseConcept(
        ordo_id=ordo_id,
        cui=cui,
        preferred_label=label,
        all_terms=tuple(sorted(terms)),
        semantic_types=("T047",),
        definition=definition,
        icd9_codes=icd9,
        icd10_codes=icd10,
    )


ALS_DEFINITION = (
    "A neurodegenerative disease characterized by progressive muscular paralysis "
    "reflecting degeneration of motor neurons in the primary motor cortex, "
    "corticospinal tracts, brainstem and spinal cord."
)


@pytest.fixture
def tiny_vocab() -> CompiledVocabulary:
    concepts = [
        make_concept(
            "ORPHA:803",
            "C0002736",
            "Amyotrophic lateral sclerosis",
            ("ALS", "Charcot disease"),
            definition=ALS_DEFINITION,
            icd9=("335.20",),
            icd10=("G12.21",),
        ),
        make_concept(
            "ORPHA:101",
            "C0021051",
            "Primary immunodeficiency",
            ("PID",),
            definition="A group of disorders with impaired immune function.",
            icd10=("D84.9",),
        ),
        make_concept(
            "ORPHA:904",
            "C0020179",
            "Huntington's disease",
            ("Huntington disease",),
            definition="A neurodegenerative disorder with chorea and cognitive decline.",
            icd10=("G10",),
        ),
        make_concept(
            "ORPHA:555",
            "C0585362",
            "Subacute rehabilitation placement",
            ("SAR",),
        ),
    ]
    return compile_vocabulary(concepts, {"test": "fixture"})


def build_als_document(doc_id: str = "doc-als", patient_id: str = "P0001") -> Document:
    """A document with the classic term starting exactly at code point 111."""
    base = (
        "Discharge summary. Brief hospital course. The patient presented with "
        "progressive limb weakness and dysarthria."
    )
    pad = ALS_START - len(base)
    assert pad >= 1, f"base sentence too long by {-pad} chars"
    text = (
        base
        + " " * pad
        + ALS_TERM
        + " was confirmed by the neurology service. The patient was counseled "
        "on prognosis and supportive therapy options."
    )
    assert text[ALS_START:ALS_END] == ALS_TERM
    return Document.create(doc_id, patient_id, text)


@pytest.fixture
def als_document() -> Document:
    return build_als_document()


@pytest.fixture
def als_corpus(als_document) -> Corpus:
    return Corpus([als_document])


def random_vocab_and_doc(seed: int) -> tuple[CompiledVocabulary, Document]:
    """Randomized (vocabulary, document) pair for oracle-equivalence runs.

    Skewed toward collisions: short overlapping words, shared prefixes,
    abbreviation-shaped terms, random casing and punctuation separators.
    """
    rng = random.Random(seed)
    fragments = ["aba", "ba", "ab", "ca", "cab", "ark", "arka", "dol", "dolor",
                 "mer", "mera", "x1", "q", "za"]
    words = fragments + ["".join(rng.choice("abcdxyz") for _ in range(rng.randint(2, 7)))
                         for _ in range(8)]
    from rarephen.textnorm import normalize_term

    concepts = []
    n_concepts = rng.randint(1, 6)
    for i in range(n_concepts):
        terms = []
        for _ in range(rng.randint(1, 4)):
            if rng.random() < 0.2:
                cand = "".join(rng.choice("ABCDXZ") for _ in range(rng.randint(2, 4)))
            else:
                cand = " ".join(rng.choice(words) for _ in range(rng.randint(1, 3)))
                if rng.random() < 0.2:
                    cand = cand.replace(" ", "-", 1)
            terms.append(cand)
        norm_terms = {normalize_term(t).text for t in terms} - {""}
        if not norm_terms:
            norm_terms = {f"fallback{i}"}
        label = sorted(norm_terms)[0]
        concepts.append(
            RareDiseaseConcept(
                ordo_id=f"ORPHA:{i}",
                cui=f"C{i:07d}",
                preferred_label=label,
                all_terms=tuple(sorted(norm_terms | {normalize_term(label).text})),
                semantic_types=("T047",),
            )
        )
    vocab = compile_vocabulary(concepts)

    separators = [" ", "  ", ", ", ". ", "-", "/", "; ", "\n"]
    parts = []
    for _ in range(rng.randint(5, 60)):
        word = rng.choice(words + ["ABA", "BA", "ALS", "the", "of"])
        if rng.random() < 0.3:
            word = word.upper() if rng.random() < 0.5 else word.capitalize()
        parts.append(word)
        parts.append(rng.choice(separators))
    text = "".join(parts).strip() or "empty placeholder text"
    doc = Document.create(f"rand-{seed}", f"P{seed}", text)
    return vocab, doc
