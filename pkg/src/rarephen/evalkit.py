"""Mention-level scoring, agreement statistics, and parameter sweeps.

Metrics are micro-averaged over the pooled mention set. True negatives are
undefined for extraction pipelines: a gold false_mention predicted false
contributes to no counter. Kappa is computed in exact rational arithmetic
and converted to float at the end.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import GOLD_TRUE, Corpus, GoldLabel, canonical_json_line
from .errors import ValidationError
from .extract import Mention
from .llmfilter import FilterSettings, Verdict, run_filter
from .vocab import CompiledVocabulary

SCORING_CLOSED = "closed"  # every prediction must have a gold record
SCORING_OPEN = "open"  # unmatched positive prediction counts as fp

AXIS_SHOTS = "shots"
AXIS_CONTEXT = "context_words"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValidationError("confusion counts must be non-negative")


@dataclass(frozen=True)
class MetricsResult:
    precision: float
    recall: float
    f1: float
    degenerate_flags: frozenset[str] = frozenset()

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "degenerate_flags": sorted(self.degenerate_flags),
        }


@dataclass(frozen=True)
class KappaResult:
    p_observed: float
    p_expected: float
    kappa: float
    item_count: int

    def to_dict(self) -> dict:
        return {
            "p_observed": self.p_observed,
            "p_expected": self.p_expected,
            "kappa": self.kappa,
            "item_count": self.item_count,
        }


def score_mentions(
    verdicts: Sequence[Verdict],
    gold: Sequence[GoldLabel],
    mode: str = SCORING_CLOSED,
) -> ConfusionCounts:
    """Confusion counts over exact (doc_id, start, end) keys.

    closed mode asserts every prediction has a gold record; open mode counts
    a positive prediction without one as a false positive. Parse-failed
    verdicts never assert a label: they cost recall when gold is true.
    """
    if mode not in (SCORING_CLOSED, SCORING_OPEN):
        raise ValidationError(f"unknown scoring mode {mode!r}")
    by_key: dict[tuple, Verdict] = {}
    for verdict in verdicts:
        if verdict.key in by_key:
            raise ValidationError(f"duplicate verdict for mention key {verdict.key}")
        by_key[verdict.key] = verdict
    gold_by_key: dict[tuple, GoldLabel] = {}
    for label in gold:
        if label.key in gold_by_key:
            raise ValidationError(f"duplicate gold record for mention key {label.key}")
        gold_by_key[label.key] = label

    tp = fp = fn = 0
    for key, verdict in by_key.items():
        gold_rec = gold_by_key.get(key)
        if gold_rec is None:
            if mode == SCORING_CLOSED:
                raise ValidationError(
                    f"closed-world scoring: prediction {key} has no gold record"
                )
            if verdict.label == GOLD_TRUE:
                fp += 1
            continue
        if verdict.label == GOLD_TRUE:
            if gold_rec.label == GOLD_TRUE:
                tp += 1
            else:
                fp += 1
        else:  # predicted false or parse-failed
            if gold_rec.label == GOLD_TRUE:
                fn += 1
    for key, gold_rec in gold_by_key.items():
        if gold_rec.label == GOLD_TRUE and key not in by_key:
            fn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn)


def precision_recall_f1(counts: ConfusionCounts) -> MetricsResult:
    """Standard P/R/F1 with explicit degenerate handling."""
    flags = set()
    if counts.tp + counts.fp == 0:
        precision = 0.0
        flags.add("no_predictions")
    else:
        precision = counts.tp / (counts.tp + counts.fp)
    if counts.tp + counts.fn == 0:
        recall = 0.0
        flags.add("no_gold")
    else:
        recall = counts.tp / (counts.tp + counts.fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return MetricsResult(
        precision=precision, recall=recall, f1=f1, degenerate_flags=frozenset(flags)
    )


def cohens_kappa(labels_a: Sequence, labels_b: Sequence) -> KappaResult:
    """Chance-corrected agreement between two aligned label vectors.

    Exact rational arithmetic throughout, so e.g. the classic
    40/40/10/10 pattern yields kappa 0.6 with no float drift.
    """
    if len(labels_a) != len(labels_b):
        raise ValidationError(
            f"label vectors differ in length: {len(labels_a)} vs {len(labels_b)}"
        )
    n = len(labels_a)
    if n == 0:
        raise ValidationError("kappa needs at least one item")
    agree = sum(1 for a, b in zip(labels_a, labels_b) if a == b)
    marg_a: dict = {}
    marg_b: dict = {}
    for a in labels_a:
        marg_a[a] = marg_a.get(a, 0) + 1
    for b in labels_b:
        marg_b[b] = marg_b.get(b, 0) + 1
    p_o = Fraction(agree, n)
    p_e = sum(
        (Fraction(marg_a.get(cat, 0), n) * Fraction(marg_b.get(cat, 0), n)
         for cat in set(marg_a) | set(marg_b)),
        Fraction(0),
    )
    if p_e == 1:
        kappa = Fraction(1) if p_o == 1 else Fraction(0)
    else:
        kappa = (p_o - p_e) / (1 - p_e)
    return KappaResult(
        p_observed=float(p_o), p_expected=float(p_e), kappa=float(kappa), item_count=n
    )


def coverage_of(verdicts: Sequence[Verdict], mention_count: int) -> float:
    """Fraction of mentions that received a usable (labeled) verdict."""
    if mention_count == 0:
        return 0.0
    labeled = sum(1 for v in verdicts if v.label is not None)
    return labeled / mention_count


@dataclass(frozen=True)
class SweepPoint:
    axis_value: int
    metrics: MetricsResult
    coverage: float
    input_digest: str


@dataclass
class SweepResult:
    axis: str
    points: list[SweepPoint]
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "points": [
                {
                    "axis_value": p.axis_value,
                    **p.metrics.to_dict(),
                    "coverage": p.coverage,
                    "input_digest": p.input_digest,
                }
                for p in self.points
            ],
            "metadata": self.metadata,
        }


def _inputs_digest(corpus: Corpus, gold: Sequence[GoldLabel]) -> str:
    h = hashlib.sha256()
    for doc in corpus:
        h.update(canonical_json_line(doc.to_dict()).encode("utf-8"))
    for label in sorted(gold, key=lambda g: g.key):
        h.update(canonical_json_line(label.to_dict()).encode("utf-8"))
    return h.hexdigest()


def _run_sweep(
    axis: str,
    corpus: Corpus,
    mentions: Sequence[Mention],
    gold: Sequence[GoldLabel],
    vocab: CompiledVocabulary,
    settings_for_value: Callable[[int], FilterSettings],
    values: Sequence[int],
    scoring_mode: str,
) -> SweepResult:
    if not values:
        raise ValidationError("sweep needs at least one axis value")
    ordered_values = list(values)
    if any(b <= a for a, b in zip(ordered_values, ordered_values[1:])):
        raise ValidationError(f"axis values must be strictly increasing: {ordered_values}")
    points = []
    digests = set()
    base_settings = None
    for value in ordered_values:
        settings = settings_for_value(value)
        if base_settings is None:
            base_settings = settings
        digest = _inputs_digest(corpus, gold)
        digests.add(digest)
        if len(digests) > 1:
            raise ValidationError("sweep inputs changed between points")
        result = run_filter(corpus, mentions, vocab, settings)
        counts = score_mentions(result.verdicts, gold, mode=scoring_mode)
        points.append(
            SweepPoint(
                axis_value=value,
                metrics=precision_recall_f1(counts),
                coverage=coverage_of(result.verdicts, len(mentions)),
                input_digest=digest,
            )
        )
    metadata = dict(base_settings.describe()) if base_settings else {}
    metadata["axis_values"] = ordered_values
    return SweepResult(axis=axis, points=points, metadata=metadata)


def run_fewshot_sweep(
    corpus: Corpus,
    mentions: Sequence[Mention],
    gold: Sequence[GoldLabel],
    vocab: CompiledVocabulary,
    settings: FilterSettings,
    k_values: Sequence[int],
    scoring_mode: str = SCORING_CLOSED,
) -> SweepResult:
    """One full filter+score pass per shot count, same seed and windows."""
    for k in k_values:
        if not (1 <= k <= 10):
            raise ValidationError(f"shot counts must lie in [1, 10], got {k}")

    def for_value(k: int) -> FilterSettings:
        return replace(settings, strategy="few_shot", shots=k)

    return _run_sweep(
        AXIS_SHOTS, corpus, mentions, gold, vocab, for_value, k_values, scoring_mode
    )


def run_context_sweep(
    corpus: Corpus,
    mentions: Sequence[Mention],
    gold: Sequence[GoldLabel],
    vocab: CompiledVocabulary,
    settings: FilterSettings,
    window_values: Sequence[int],
    scoring_mode: str = SCORING_CLOSED,
) -> SweepResult:
    """One full filter+score pass per words-mode window size."""
    for w in window_values:
        if w < 1:
            raise ValidationError(f"window sizes must be positive, got {w}")

    def for_value(w: int) -> FilterSettings:
        return replace(settings, context_mode="words", context_words=w)

    return _run_sweep(
        AXIS_CONTEXT, corpus, mentions, gold, vocab, for_value, window_values, scoring_mode
    )


def write_sweep_csv(result: SweepResult, path: str | Path) -> None:
    lines = ["axis_value,precision,recall,f1,coverage"]
    for p in result.points:
        lines.append(
            f"{p.axis_value},{p.metrics.precision:.6f},{p.metrics.recall:.6f},"
            f"{p.metrics.f1:.6f},{p.coverage:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def metrics_report(
    counts: ConfusionCounts,
    metrics: MetricsResult,
    *,
    scoring_mode: str,
    coverage: float,
    parse_failed: int,
    baseline_counts: ConfusionCounts | None = None,
    baseline_metrics: MetricsResult | None = None,
) -> dict:
    """The metrics.json payload: filtered scores plus the dictionary-only
    baseline (every extracted mention taken as positive)."""
    report = {
        "scoring_mode": scoring_mode,
        "counts": {"tp": counts.tp, "fp": counts.fp, "fn": counts.fn},
        "metrics": metrics.to_dict(),
        "coverage": coverage,
        "parse_failed": parse_failed,
    }
    if baseline_counts is not None and baseline_metrics is not None:
        report["dictionary_baseline"] = {
            "counts": {
                "tp": baseline_counts.tp,
                "fp": baseline_counts.fp,
                "fn": baseline_counts.fn,
            },
            "metrics": baseline_metrics.to_dict(),
        }
    return report


def dictionary_verdicts(mentions: Iterable[Mention]) -> list[Verdict]:
    """The dictionary-only stage as verdicts: every extracted mention positive."""
    return [
        Verdict(
            doc_id=m.doc_id,
            start=m.start,
            end=m.end,
            label=GOLD_TRUE,
            raw_response="yes",
            parse_status="clean",
            model_name="dictionary",
            strategy="dictionary",
        )
        for m in mentions
    ]


def render_metrics_table(report: dict) -> str:
    """Small human-readable table for the evaluate CLI."""
    rows = []
    if "dictionary_baseline" in report:
        base = report["dictionary_baseline"]["metrics"]
        rows.append(("dictionary", base["precision"], base["recall"], base["f1"]))
    m = report["metrics"]
    rows.append(("filtered", m["precision"], m["recall"], m["f1"]))
    lines = [f"{'stage':<12} {'precision':>9} {'recall':>9} {'f1':>9}"]
    for name, p, r, f1 in rows:
        lines.append(f"{name:<12} {p:>9.4f} {r:>9.4f} {f1:>9.4f}")
    lines.append(
        f"coverage {report['coverage']:.4f}  parse_failed {report['parse_failed']}  "
        f"mode {report['scoring_mode']}"
    )
    return "\n".join(lines)


def kappa_from_files(path_a: str | Path, path_b: str | Path) -> KappaResult:
    """Kappa over two label JSONL files aligned by (doc_id, start, end)."""

    def read(path: str | Path) -> dict[tuple, str]:
        out: dict[tuple, str] = {}
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                key = (obj["doc_id"], obj["start"], obj["end"])
                if key in out:
                    raise ValidationError(f"{path}: duplicate label for {key}")
                out[key] = obj["label"]
        return out

    a = read(path_a)
    b = read(path_b)
    if a.keys() != b.keys():
        only_a = sorted(a.keys() - b.keys())[:3]
        only_b = sorted(b.keys() - a.keys())[:3]
        raise ValidationError(
            f"label files do not align: only in A {only_a}, only in B {only_b}"
        )
    keys = sorted(a)
    return cohens_kappa([a[k] for k in keys], [b[k] for k in keys])
