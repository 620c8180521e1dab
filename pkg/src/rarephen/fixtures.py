"""Synthetic fixture generator: vocabulary sources, documents with planted
mentions, exact gold labels, ICD diagnoses, and a few-shot example pool.

Licensed ontology releases and clinical corpora cannot ship with the
repository, so acceptance runs on generated data with known ground truth.
Disease-term words and filler words come from disjoint alphabets, so the
planted mentions are provably the only dictionary matches, which makes the
dictionary stage's recall 1.0 and its precision the planted true/false
ratio by construction.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import canonical_json_line

# Words that may appear in filler sentences. Deliberately excludes negation
# cues (no/not/denies/without/negative/rule) and every word used in disease
# terms, so filler can never complete a vocabulary term or trip the
# reference filter.
FILLER_WORDS = [
    "patient", "admission", "hospital", "course", "stable", "improved", "daily",
    "medication", "dose", "continued", "follow", "clinic", "exam", "noted",
    "review", "labs", "within", "normal", "limits", "tolerated", "diet",
    "ambulating", "discharge", "home", "services", "plan", "started", "oral",
    "therapy", "monitor", "blood", "pressure", "heart", "rate", "regular",
    "rhythm", "lungs", "clear", "auscultation", "abdomen", "soft", "tender",
    "extremities", "edema", "neurologic", "intact", "alert", "oriented",
    "baseline", "chronic", "acute", "management", "treated", "resolved",
    "improving", "recommend", "outpatient", "appointment", "weeks", "repeat",
    "imaging", "chest", "unremarkable", "prior", "history", "significant",
    "presents", "complaint", "days", "symptoms", "onset", "gradual", "denied",
    "fevers", "chills", "weight", "appetite", "good", "sleep", "adequate",
    "vitals", "afebrile", "saturation", "room", "air", "respiratory", "effort",
    "comfortable", "examination", "reveals", "benign", "findings", "overall",
    "assessment", "continue", "current", "regimen", "adjust", "needed",
    "counseled", "regarding", "importance", "adherence", "diet", "exercise",
    "smoking", "cessation", "alcohol", "moderation", "safety", "precautions",
    "return", "emergency", "worsening", "instructions", "provided", "verbalized",
    "understanding", "primary", "care", "physician", "specialist", "referral",
    "placed", "pending", "results", "final", "read", "radiology", "consult",
    "service", "appreciated", "recommendations", "implemented", "transition",
    "insulin", "sliding", "scale", "fluids", "electrolytes", "repleted",
    "morning", "evening", "bedtime", "tablet", "capsule", "injection",
    "subcutaneous", "intravenous", "antibiotics", "completed", "culture",
    "sensitivities", "narrowed", "coverage", "renal", "function", "creatinine",
    "trending", "down", "hemoglobin", "white", "count", "platelets", "slightly",
    "elevated", "procedure", "performed", "complications", "recovery", "unit",
    "transferred", "floor", "physical", "occupational", "evaluated", "session",
    "progress", "ongoing", "goals", "met", "caregiver", "education", "family",
    "meeting", "held", "decisions", "documented", "code", "status", "full",
]

# Structural tail words reserved for disease terms only.
DISEASE_STRUCT_WORDS = ["syndrome", "disease", "disorder", "deficiency", "malformation"]

_ROOT_SYLLABLES_A = ["vel", "mor", "kar", "del", "fen", "gor", "hal", "jun", "lom",
                     "mer", "nor", "pel", "quin", "ras", "sol", "tur", "ver", "wex",
                     "yor", "zam", "bry", "cren", "dov", "elt", "fay"]
_ROOT_SYLLABLES_B = ["dro", "quet", "lin", "bar", "cos", "dun", "fir", "gan", "hes",
                     "ilo", "jap", "kel", "lum", "mon", "nix", "oph", "pra", "ril",
                     "sta", "tev", "umb", "vok", "wil", "xan", "yed"]
_ROOT_SUFFIXES = ["osis", "emia", "itis", "opathy", "oma", "algia", "asthenia", "ectasia"]

# (prefix, suffix) sentence templates; the mention surface goes in between.
POSITIVE_TEMPLATES = [
    ("The patient was diagnosed with ", " last year."),
    ("Findings are consistent with ", " on this admission."),
    ("Longstanding ", " followed by the specialty clinic."),
    ("Workup this stay confirmed ", " as the unifying diagnosis."),
]
NEGATED_TEMPLATES = [
    ("The patient does not have ", "."),
    ("No signs of ", " were observed."),
    ("The family denies ", " at this time."),
    ("Patient presented without ", " on exam."),
    ("Screening was negative for ", " overall."),
]
HYPOTHETICAL_TEMPLATES = [
    ("Plan to rule out ", " with further testing."),
    ("Admitted to r/o ", " given the presentation."),
]
ABBREV_TEMPLATES = [
    ("Chart review noted ", " during a prior stay."),
    ("Continued management of ", " as an outpatient."),
]
UNCUED_FALSE_TEMPLATES = [
    ("It is unlikely that this represents ", " at this stage."),
    ("The overall picture is doubtful for ", " per the consultant."),
]
CUE_TRUE_TEMPLATES = [
    ("Patient denies fatigue but ", " was confirmed today."),
]

KIND_POSITIVE = "positive"
KIND_NEGATED = "negated"
KIND_HYPOTHETICAL = "hypothetical"
KIND_AMBIGUOUS_ABBREV = "ambiguous_abbreviation"
KIND_ABBREV_EXPANDED = "abbreviation_with_expansion"
KIND_UNCUED_FALSE = "uncued_negation"
KIND_CUE_TRUE = "cue_before_true"

TRUE_KINDS = {KIND_POSITIVE, KIND_ABBREV_EXPANDED, KIND_CUE_TRUE}


@dataclass
class FixtureParams:
    seed: int = 42
    concepts: int = 200
    documents: int = 200
    target_mean_words: int = 1669
    positive: int = 80
    abbrev_expanded: int = 20
    negated: int = 50
    hypothetical: int = 25
    ambiguous_abbrev: int = 25
    uncued_false: int = 3
    cue_true: int = 3
    example_docs: int = 30
    definition_rate: float = 0.85
    icd_code_rate: float = 0.7

    @property
    def gold_true(self) -> int:
        return self.positive + 2 * self.abbrev_expanded + self.cue_true

    @property
    def gold_false(self) -> int:
        return self.negated + self.hypothetical + self.ambiguous_abbrev + self.uncued_false


@dataclass
class _ConceptSpec:
    index: int
    ordo_id: str
    cui: str
    root: str
    label: str
    synonyms: list[str]
    abbreviation: str | None
    umls_terms: list[str]
    semantic_type: str
    definition: str | None
    icd9: str | None
    icd10: str | None
    linked_cui_declared: bool


@dataclass
class FixtureSet:
    out_dir: Path
    paths: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def _make_roots(rng: random.Random, count: int) -> list[str]:
    filler = set(FILLER_WORDS)
    roots: list[str] = []
    seen = set()
    while len(roots) < count:
        root = (
            rng.choice(_ROOT_SYLLABLES_A)
            + rng.choice(_ROOT_SYLLABLES_B)
            + rng.choice(_ROOT_SUFFIXES)
        )
        if root in seen or root in filler:
            continue
        seen.add(root)
        roots.append(root)
    return roots


def _make_abbreviation(root: str, taken: set[str]) -> str:
    """Unique 3-4 letter uppercase abbreviation; deterministic sweep so the
    namespace cannot wedge on hot consonant prefixes."""
    letters = "BCDFGHJKLMNPQRSTVWXZ"
    base = "".join(ch for ch in root if ch not in "aeiou")[:3].upper()
    if len(base) < 3:
        base = (base + "XQZ")[:3]
    if base not in taken:
        taken.add(base)
        return base
    for one in letters:
        cand = base[:2] + one
        if cand not in taken:
            taken.add(cand)
            return cand
    for one in letters:
        for two in letters:
            cand = base[:2] + one + two
            if cand not in taken:
                taken.add(cand)
                return cand
    raise ValueError("abbreviation namespace exhausted")


def _build_concepts(rng: random.Random, params: FixtureParams) -> list[_ConceptSpec]:
    roots = _make_roots(rng, params.concepts)
    taken_abbrevs: set[str] = set()
    specs: list[_ConceptSpec] = []
    for i, root in enumerate(roots):
        struct = DISEASE_STRUCT_WORDS[i % len(DISEASE_STRUCT_WORDS)]
        other_struct = DISEASE_STRUCT_WORDS[(i + 1) % len(DISEASE_STRUCT_WORDS)]
        label = f"{root.capitalize()} {struct}"
        synonyms = [f"{root} {other_struct}"]
        abbreviation = None
        # roughly a third of concepts carry an abbreviation synonym
        if i % 3 == 0:
            abbreviation = _make_abbreviation(root, taken_abbrevs)
            synonyms.append(abbreviation)
        umls_terms = [label, f"{root} {other_struct}", root]
        definition = None
        if rng.random() < params.definition_rate:
            body = " ".join(rng.choice(FILLER_WORDS) for _ in range(10))
            definition = f"A rare condition characterized by {body}."
        icd9 = f"{300 + i}.{i % 10}" if rng.random() < params.icd_code_rate else None
        icd10 = f"Q{i % 100:02d}.{i % 10}" if rng.random() < params.icd_code_rate else None
        specs.append(
            _ConceptSpec(
                index=i,
                ordo_id=f"ORPHA:{10000 + i}",
                cui=f"C{1000000 + i}",
                root=root,
                label=label,
                synonyms=synonyms,
                abbreviation=abbreviation,
                umls_terms=umls_terms,
                semantic_type="T047" if i % 7 else "T019",
                definition=definition,
                icd9=icd9,
                icd10=icd10,
                linked_cui_declared=(i % 10 == 0),
            )
        )
    # one deliberately shared abbreviation across two reserved concepts,
    # mirroring the classic ambiguous-abbreviation failure mode
    if len(specs) >= 2:
        a, b = specs[-2], specs[-1]
        shared = _make_abbreviation("sharedroot", taken_abbrevs)
        for spec in (a, b):
            if spec.abbreviation is None:
                spec.abbreviation = shared
                spec.synonyms.append(shared)
            else:
                spec.synonyms.append(shared)
    return specs


def _write_vocab_sources(specs: list[_ConceptSpec], out_dir: Path) -> dict:
    ordo_lines = ["ordo_id\tlabel\tsynonyms\tcui"]
    umls_lines = ["cui\tterm\tsemantic_types\tdefinition"]
    icd_lines = ["cui\ticd9\ticd10"]
    for spec in specs:
        linked = spec.cui if spec.linked_cui_declared else ""
        ordo_lines.append(
            f"{spec.ordo_id}\t{spec.label}\t{'|'.join(spec.synonyms)}\t{linked}"
        )
        seen_terms = set()
        for term in spec.umls_terms + ([spec.abbreviation] if spec.abbreviation else []):
            if term in seen_terms:
                continue
            seen_terms.add(term)
            definition = spec.definition or ""
            umls_lines.append(f"{spec.cui}\t{term}\t{spec.semantic_type}\t{definition}")
        if spec.icd9 or spec.icd10:
            icd_lines.append(f"{spec.cui}\t{spec.icd9 or ''}\t{spec.icd10 or ''}")
    paths = {
        "ordo": out_dir / "ordo.tsv",
        "umls": out_dir / "umls.tsv",
        "icd_map": out_dir / "icd_map.tsv",
    }
    paths["ordo"].write_text("\n".join(ordo_lines) + "\n", encoding="utf-8")
    paths["umls"].write_text("\n".join(umls_lines) + "\n", encoding="utf-8")
    paths["icd_map"].write_text("\n".join(icd_lines) + "\n", encoding="utf-8")
    return paths


def _filler_sentence(rng: random.Random) -> str:
    n = rng.randint(6, 12)
    words = [rng.choice(FILLER_WORDS) for _ in range(n)]
    return " ".join(words).capitalize() + "."


@dataclass
class _Plant:
    kind: str
    surface: str
    template: tuple[str, str]
    gold_label: str
    ordo_id: str


def _doc_word_count(rng: random.Random, mean: int) -> int:
    import math

    sigma = 0.6
    mu = math.log(mean) - sigma * sigma / 2
    return max(87, min(29684, int(rng.lognormvariate(mu, sigma))))


def generate_fixtures(out_dir: str | Path, params: FixtureParams | None = None) -> FixtureSet:
    """Emit the complete fixture tree; byte-identical for a fixed seed."""
    params = params or FixtureParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(params.seed)

    specs = _build_concepts(rng, params)
    paths = _write_vocab_sources(specs, out_dir)

    # concept pools: positives and expansions must never collide with the
    # concepts reserved for expansion-less abbreviations (the reference
    # filter's rule (b) scans the whole document)
    with_abbrev = [s for s in specs[:-2] if s.abbreviation]
    reserved_ambiguous = with_abbrev[-max(1, len(with_abbrev) // 3):] + specs[-2:]
    reserved_ids = {s.index for s in reserved_ambiguous}
    expansion_pool = [s for s in with_abbrev if s.index not in reserved_ids]
    positive_pool = [s for s in specs[:-2] if s.index not in reserved_ids]

    plants: list[_Plant] = []
    for i in range(params.positive):
        spec = positive_pool[i % len(positive_pool)]
        surface = spec.label if i % 2 == 0 else f"{spec.root} {DISEASE_STRUCT_WORDS[(spec.index + 1) % len(DISEASE_STRUCT_WORDS)]}"
        plants.append(
            _Plant(KIND_POSITIVE, surface, POSITIVE_TEMPLATES[i % len(POSITIVE_TEMPLATES)],
                   "true_mention", spec.ordo_id)
        )
    for i in range(params.negated):
        spec = positive_pool[(i * 3 + 1) % len(positive_pool)]
        plants.append(
            _Plant(KIND_NEGATED, spec.label, NEGATED_TEMPLATES[i % len(NEGATED_TEMPLATES)],
                   "false_mention", spec.ordo_id)
        )
    for i in range(params.hypothetical):
        spec = positive_pool[(i * 5 + 2) % len(positive_pool)]
        plants.append(
            _Plant(KIND_HYPOTHETICAL, spec.label,
                   HYPOTHETICAL_TEMPLATES[i % len(HYPOTHETICAL_TEMPLATES)],
                   "false_mention", spec.ordo_id)
        )
    for i in range(params.uncued_false):
        spec = positive_pool[(i * 7 + 3) % len(positive_pool)]
        plants.append(
            _Plant(KIND_UNCUED_FALSE, spec.label,
                   UNCUED_FALSE_TEMPLATES[i % len(UNCUED_FALSE_TEMPLATES)],
                   "false_mention", spec.ordo_id)
        )
    for i in range(params.cue_true):
        spec = positive_pool[(i * 11 + 4) % len(positive_pool)]
        plants.append(
            _Plant(KIND_CUE_TRUE, spec.label, CUE_TRUE_TEMPLATES[i % len(CUE_TRUE_TEMPLATES)],
                   "true_mention", spec.ordo_id)
        )

    # paired plants that must land in one document together
    paired: list[tuple[_Plant, _Plant]] = []
    for i in range(params.abbrev_expanded):
        spec = expansion_pool[i % len(expansion_pool)]
        paired.append(
            (
                _Plant(KIND_ABBREV_EXPANDED, spec.label,
                       POSITIVE_TEMPLATES[i % len(POSITIVE_TEMPLATES)],
                       "true_mention", spec.ordo_id),
                _Plant(KIND_ABBREV_EXPANDED, spec.abbreviation,
                       ABBREV_TEMPLATES[i % len(ABBREV_TEMPLATES)],
                       "true_mention", spec.ordo_id),
            )
        )
    ambiguous_plants: list[_Plant] = []
    for i in range(params.ambiguous_abbrev):
        spec = reserved_ambiguous[i % len(reserved_ambiguous)]
        ambiguous_plants.append(
            _Plant(KIND_AMBIGUOUS_ABBREV, spec.abbreviation,
                   ABBREV_TEMPLATES[i % len(ABBREV_TEMPLATES)],
                   "false_mention", spec.ordo_id)
        )

    # distribute plants over documents
    doc_plants: list[list[_Plant]] = [[] for _ in range(params.documents)]
    for plant in plants + ambiguous_plants:
        doc_plants[rng.randrange(params.documents)].append(plant)
    for expansion, abbrev in paired:
        idx = rng.randrange(params.documents)
        doc_plants[idx].append(expansion)
        doc_plants[idx].append(abbrev)

    doc_lines = []
    gold_lines = []
    plant_lines = []
    for d in range(params.documents):
        doc_id = f"D{d:05d}"
        patient_id = f"P{d // 2:04d}"
        target_words = _doc_word_count(rng, params.target_mean_words)
        sentences: list[tuple[str, _Plant | None, int]] = []
        total_words = 0
        while total_words < target_words:
            s = _filler_sentence(rng)
            sentences.append((s, None, 0))
            total_words += len(s.split())
        for plant in doc_plants[d]:
            prefix, suffix = plant.template
            sentence = prefix + plant.surface + suffix
            pos = rng.randint(0, len(sentences))
            sentences.insert(pos, (sentence, plant, len(prefix)))
        cursor = 0
        text_parts = []
        doc_records = []
        for sentence, plant, prefix_len in sentences:
            if plant is not None:
                start = cursor + prefix_len
                end = start + len(plant.surface)
                doc_records.append((start, end, plant))
            text_parts.append(sentence)
            cursor += len(sentence) + 1  # single joining space
        text = " ".join(text_parts)
        doc_lines.append(
            canonical_json_line({"doc_id": doc_id, "patient_id": patient_id, "text": text})
        )
        for start, end, plant in doc_records:
            assert text[start:end] == plant.surface
            gold_lines.append(
                canonical_json_line(
                    {
                        "doc_id": doc_id,
                        "start": start,
                        "end": end,
                        "surface": plant.surface,
                        "label": plant.gold_label,
                        "source": "adjudicated",
                    }
                )
            )
            plant_lines.append(
                canonical_json_line(
                    {
                        "doc_id": doc_id,
                        "start": start,
                        "end": end,
                        "surface": plant.surface,
                        "kind": plant.kind,
                        "label": plant.gold_label,
                        "ordo_id": plant.ordo_id,
                    }
                )
            )

    paths["documents"] = out_dir / "documents.jsonl"
    paths["gold"] = out_dir / "gold.jsonl"
    paths["plant_manifest"] = out_dir / "plant_manifest.jsonl"
    paths["documents"].write_text("".join(doc_lines), encoding="utf-8")
    paths["gold"].write_text("".join(gold_lines), encoding="utf-8")
    paths["plant_manifest"].write_text("".join(plant_lines), encoding="utf-8")

    # ICD table with controlled per-category overlap against the NLP route
    true_patients: dict[str, set[str]] = {}
    for line in plant_lines:
        rec = json.loads(line)
        if rec["label"] == "true_mention":
            patient = f"P{int(rec['doc_id'][1:]) // 2:04d}"
            true_patients.setdefault(rec["ordo_id"], set()).add(patient)
    spec_by_ordo = {s.ordo_id: s for s in specs}
    icd_rows: list[tuple[str, str, str]] = []
    for i, ordo_id in enumerate(sorted(true_patients)):
        spec = spec_by_ordo[ordo_id]
        code, system = (spec.icd10, "icd10") if spec.icd10 else (spec.icd9, "icd9")
        if code is None:
            continue  # stays nlp_only through missing mappings
        patients = sorted(true_patients[ordo_id])
        if i % 3 == 0:
            continue  # nlp_only by withheld coding
        if i % 3 == 1:
            chosen = patients[: max(1, len(patients) // 2)]
        else:
            extra = f"P{9000 + i:04d}"
            chosen = patients + [extra]
        for patient in chosen:
            icd_rows.append((patient, code, system))
    icd_only_specs = [s for s in reserved_ambiguous if s.icd10 or s.icd9][:5]
    for j, spec in enumerate(icd_only_specs):
        code, system = (spec.icd10, "icd10") if spec.icd10 else (spec.icd9, "icd9")
        for patient in (f"P{8000 + 2 * j:04d}", f"P{8001 + 2 * j:04d}"):
            icd_rows.append((patient, code, system))
    paths["icd_diagnoses"] = out_dir / "icd_diagnoses.tsv"
    paths["icd_diagnoses"].write_text(
        "patient_id\tcode\tsystem\n"
        + "".join(f"{p}\t{c}\t{s}\n" for p, c, s in icd_rows),
        encoding="utf-8",
    )

    # few-shot example pool from held-out documents
    pool_lines = []
    for e in range(params.example_docs):
        doc_id = f"EX{e:04d}"
        spec = positive_pool[(e * 13 + 5) % len(positive_pool)]
        if e % 2 == 0:
            prefix, suffix = POSITIVE_TEMPLATES[e % len(POSITIVE_TEMPLATES)]
            answer = "yes"
        else:
            prefix, suffix = NEGATED_TEMPLATES[e % len(NEGATED_TEMPLATES)]
            answer = "no"
        lead = _filler_sentence(rng)
        report = lead + " " + prefix + spec.label + suffix
        start = len(lead) + 1 + len(prefix)
        pool_lines.append(
            canonical_json_line(
                {
                    "doc_id": doc_id,
                    "report_text": report,
                    "mention_surface": spec.label,
                    "start": start,
                    "end": start + len(spec.label),
                    "answer": answer,
                }
            )
        )
    paths["example_pool"] = out_dir / "example_pool.jsonl"
    paths["example_pool"].write_text("".join(pool_lines), encoding="utf-8")

    summary = {
        "seed": params.seed,
        "concepts": params.concepts,
        "documents": params.documents,
        "planted": {
            KIND_POSITIVE: params.positive,
            KIND_ABBREV_EXPANDED: 2 * params.abbrev_expanded,
            KIND_NEGATED: params.negated,
            KIND_HYPOTHETICAL: params.hypothetical,
            KIND_AMBIGUOUS_ABBREV: params.ambiguous_abbrev,
            KIND_UNCUED_FALSE: params.uncued_false,
            KIND_CUE_TRUE: params.cue_true,
        },
        "gold_true": params.gold_true,
        "gold_false": params.gold_false,
        "icd_rows": len(icd_rows),
        "example_pool": params.example_docs,
    }
    paths["summary"] = out_dir / "fixture_summary.json"
    paths["summary"].write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return FixtureSet(out_dir=out_dir, paths={k: Path(v) for k, v in paths.items()}, summary=summary)


def iter_synthetic_documents(
    seed: int,
    count: int,
    words_per_doc: int,
    plant_surfaces: list[str],
    plants_per_doc: int = 5,
):
    """Stream (doc_id, patient_id, text) tuples for large-scale runs.

    Built for throughput benchmarking: filler text with a handful of
    planted vocabulary surfaces per document, constant word count, nothing
    kept in memory.
    """
    rng = random.Random(seed)
    filler = FILLER_WORDS
    for d in range(count):
        words = rng.choices(filler, k=words_per_doc)
        for _ in range(plants_per_doc):
            if not plant_surfaces:
                break
            pos = rng.randrange(len(words))
            words[pos] = rng.choice(plant_surfaces)
        yield (f"D{d:06d}", f"P{d // 2:05d}", " ".join(words))
