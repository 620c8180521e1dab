"""Run-directory pipeline: stage execution with digest-gated skipping.

Each experiment lives in one run directory. Every stage records its input
and output digests in an append-only manifest; a stage re-runs only when its
inputs changed, and a recorded output found modified on disk is an error
rather than a silent recompute. Timestamps live only in the manifest so the
rest of a run directory is byte-reproducible.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from . import corpus as corpus_mod
from . import evalkit, extract
from .errors import StageError, ValidationError
from .llmfilter import FilterSettings, load_example_pool, run_filter, write_verdicts, load_verdicts
from .vocab import CompiledVocabulary, file_digest

MANIFEST_NAME = "manifest.json"

DOCUMENTS_FILE = "documents.jsonl"
ICD_FILE = "icd_diagnoses.tsv"
GOLD_FILE = "gold.jsonl"
MENTIONS_FILE = "mentions.jsonl"
EXTRACT_SUMMARY_FILE = "extract_summary.json"
VERDICTS_FILE = "verdicts.jsonl"
FILTER_SUMMARY_FILE = "filter_summary.json"
METRICS_FILE = "metrics.json"


@dataclass
class StageRecord:
    stage: str
    input_digests: dict[str, str]
    output_digests: dict[str, str]
    config: dict
    started_at: str
    finished_at: str

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "input_digests": self.input_digests,
            "output_digests": self.output_digests,
            "config": self.config,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


class RunManifest:
    """Append-only record of stage executions inside one run directory."""

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        self.path = self.run_dir / MANIFEST_NAME
        self.records: list[StageRecord] = []
        if self.path.exists():
            data = json.loads(self.path.read_text(encoding="utf-8"))
            self.records = [
                StageRecord(
                    stage=r["stage"],
                    input_digests=r["input_digests"],
                    output_digests=r["output_digests"],
                    config=r["config"],
                    started_at=r["started_at"],
                    finished_at=r["finished_at"],
                )
                for r in data["stages"]
            ]

    def latest(self, stage: str) -> StageRecord | None:
        for record in reversed(self.records):
            if record.stage == stage:
                return record
        return None

    def append(self, record: StageRecord) -> None:
        self.records.append(record)
        payload = {"stages": [r.to_dict() for r in self.records]}
        self.path.write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def rel(self, path: str | Path) -> str:
        """Stable manifest key: run-dir-relative, or the basename for inputs
        living outside the run directory (keeps manifests byte-reproducible
        across differently-rooted but identical experiments)."""
        path = Path(path)
        try:
            return path.resolve().relative_to(self.run_dir.resolve()).as_posix()
        except ValueError:
            return path.name

    def digest_paths(self, paths: Sequence[str | Path]) -> dict[str, str]:
        out = {}
        for p in paths:
            key = self.rel(p)
            suffix = 2
            while key in out:
                key = f"{self.rel(p)}#{suffix}"
                suffix += 1
            out[key] = file_digest(p)
        return out


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()) + "Z"


def run_stage(
    manifest: RunManifest,
    stage: str,
    input_paths: Sequence[str | Path],
    output_paths: Sequence[str | Path],
    config: dict,
    action: Callable[[], None],
    force: bool = False,
) -> bool:
    """Execute one stage under digest gating.

    Returns True when the stage ran, False when it was skipped because its
    recorded inputs, config and outputs are all unchanged. A recorded output
    that exists with a different digest raises StageError naming the stage.
    """
    for path in input_paths:
        if not Path(path).exists():
            raise StageError(stage, f"missing input {path}")
    input_digests = manifest.digest_paths(input_paths)
    previous = manifest.latest(stage)
    if previous is not None and not force:
        same_inputs = previous.input_digests == input_digests and previous.config == config
        outputs_exist = all(Path(p).exists() for p in output_paths)
        if same_inputs and outputs_exist:
            current = manifest.digest_paths(output_paths)
            if current == previous.output_digests:
                return False
            changed = sorted(
                name for name, digest in current.items()
                if previous.output_digests.get(name) != digest
            )
            raise StageError(
                stage,
                f"recorded outputs were modified on disk: {', '.join(changed)}; "
                "remove them or use force to recompute",
            )
    started = _now()
    action()
    for path in output_paths:
        if not Path(path).exists():
            raise StageError(stage, f"action did not produce expected output {path}")
    record = StageRecord(
        stage=stage,
        input_digests=input_digests,
        output_digests=manifest.digest_paths(output_paths),
        config=config,
        started_at=started,
        finished_at=_now(),
    )
    manifest.append(record)
    return True


def ingest_stage(
    run_dir: str | Path,
    docs_path: str | Path,
    icd_path: str | Path | None = None,
    gold_path: str | Path | None = None,
    force: bool = False,
) -> RunManifest:
    """Validate and canonicalize inputs into the run directory."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(run_dir)

    inputs = [docs_path]
    outputs = [run_dir / DOCUMENTS_FILE]
    if icd_path is not None:
        inputs.append(icd_path)
        outputs.append(run_dir / ICD_FILE)
    if gold_path is not None:
        inputs.append(gold_path)
        outputs.append(run_dir / GOLD_FILE)

    def action() -> None:
        corpus = corpus_mod.load_documents(docs_path)
        corpus_mod.write_documents(corpus, run_dir / DOCUMENTS_FILE)
        if icd_path is not None:
            table = corpus_mod.load_icd_diagnoses(icd_path)
            corpus_mod.write_icd_diagnoses(table, run_dir / ICD_FILE)
        if gold_path is not None:
            labels = corpus_mod.load_gold_labels(gold_path, corpus)
            corpus_mod.write_gold_labels(labels, run_dir / GOLD_FILE)

    run_stage(
        manifest,
        "ingest",
        inputs,
        outputs,
        {"icd": icd_path is not None, "gold": gold_path is not None},
        action,
        force=force,
    )
    return manifest


def extract_stage(
    run_dir: str | Path,
    vocab_path: str | Path,
    jobs: int = 1,
    force: bool = False,
) -> RunManifest:
    """Dictionary extraction over the ingested corpus."""
    run_dir = Path(run_dir)
    manifest = RunManifest(run_dir)
    docs_file = run_dir / DOCUMENTS_FILE
    mentions_file = run_dir / MENTIONS_FILE
    summary_file = run_dir / EXTRACT_SUMMARY_FILE

    def action() -> None:
        corpus = corpus_mod.load_documents(docs_file)
        vocab = CompiledVocabulary.load(vocab_path)
        mentions: list[extract.Mention] = []
        per_doc_counts: list[int] = []
        if jobs > 1:
            from multiprocessing import Pool

            docs = list(corpus)
            with Pool(jobs, initializer=_pool_init, initargs=(vocab_path,)) as pool:
                for found in pool.imap(_pool_extract, docs, chunksize=64):
                    per_doc_counts.append(len(found))
                    mentions.extend(found)
        else:
            for doc in corpus:
                found = extract.find_mentions(doc, vocab)
                found = extract.filter_to_rare(found, vocab)
                per_doc_counts.append(len(found))
                mentions.extend(found)
        extract.write_mentions(mentions, mentions_file)
        histogram: dict[str, int] = {}
        for count in per_doc_counts:
            histogram[str(count)] = histogram.get(str(count), 0) + 1
        summary = {
            "documents_scanned": len(per_doc_counts),
            "mentions_found": len(mentions),
            "mentions_per_document_histogram": dict(sorted(histogram.items(), key=lambda kv: int(kv[0]))),
            "matcher_version": extract.MATCHER_VERSION,
        }
        summary_file.write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    run_stage(
        manifest,
        "extract",
        [docs_file, vocab_path],
        [mentions_file, summary_file],
        {"vocab": Path(vocab_path).name, "jobs": jobs},
        action,
        force=force,
    )
    return manifest


_POOL_VOCAB: CompiledVocabulary | None = None


def _pool_init(vocab_path: str) -> None:
    global _POOL_VOCAB
    _POOL_VOCAB = CompiledVocabulary.load(vocab_path)


def _pool_extract(doc) -> list:
    found = extract.find_mentions(doc, _POOL_VOCAB)
    return extract.filter_to_rare(found, _POOL_VOCAB)


def _filter_config_snapshot(settings: FilterSettings) -> dict:
    snapshot = settings.describe()
    snapshot["cache_dir"] = settings.cache_dir
    return snapshot


def filter_stage(
    run_dir: str | Path,
    vocab_path: str | Path,
    settings: FilterSettings,
    force: bool = False,
) -> RunManifest:
    """Verdict computation over extracted mentions."""
    run_dir = Path(run_dir)
    manifest = RunManifest(run_dir)
    docs_file = run_dir / DOCUMENTS_FILE
    mentions_file = run_dir / MENTIONS_FILE
    verdicts_file = run_dir / VERDICTS_FILE
    summary_file = run_dir / FILTER_SUMMARY_FILE

    def action() -> None:
        corpus = corpus_mod.load_documents(docs_file)
        vocab = CompiledVocabulary.load(vocab_path)
        mentions = extract.load_mentions(mentions_file, corpus)
        result = run_filter(corpus, mentions, vocab, settings)
        write_verdicts(result.verdicts, verdicts_file)
        summary_file.write_text(
            json.dumps(result.summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    run_stage(
        manifest,
        "filter",
        [docs_file, mentions_file, vocab_path],
        [verdicts_file, summary_file],
        _filter_config_snapshot(settings),
        action,
        force=force,
    )
    return manifest


def evaluate_stage(
    run_dir: str | Path,
    gold_path: str | Path | None = None,
    scoring_mode: str = evalkit.SCORING_CLOSED,
    force: bool = False,
) -> RunManifest:
    """Score verdicts (and the dictionary baseline) against gold labels."""
    run_dir = Path(run_dir)
    manifest = RunManifest(run_dir)
    docs_file = run_dir / DOCUMENTS_FILE
    mentions_file = run_dir / MENTIONS_FILE
    verdicts_file = run_dir / VERDICTS_FILE
    gold_file = Path(gold_path) if gold_path is not None else run_dir / GOLD_FILE
    metrics_file = run_dir / METRICS_FILE

    def action() -> None:
        corpus = corpus_mod.load_documents(docs_file)
        mentions = extract.load_mentions(mentions_file, corpus)
        verdicts = load_verdicts(verdicts_file)
        gold = corpus_mod.load_gold_labels(gold_file, corpus)
        counts = evalkit.score_mentions(verdicts, gold, mode=scoring_mode)
        metrics = evalkit.precision_recall_f1(counts)
        baseline_verdicts = evalkit.dictionary_verdicts(mentions)
        baseline_counts = evalkit.score_mentions(baseline_verdicts, gold, mode=scoring_mode)
        baseline_metrics = evalkit.precision_recall_f1(baseline_counts)
        report = evalkit.metrics_report(
            counts,
            metrics,
            scoring_mode=scoring_mode,
            coverage=evalkit.coverage_of(verdicts, len(mentions)),
            parse_failed=sum(1 for v in verdicts if v.parse_status == "failed"),
            baseline_counts=baseline_counts,
            baseline_metrics=baseline_metrics,
        )
        metrics_file.write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    run_stage(
        manifest,
        "evaluate",
        [docs_file, mentions_file, verdicts_file, gold_file],
        [metrics_file],
        {"scoring_mode": scoring_mode, "gold": manifest.rel(gold_file)},
        action,
        force=force,
    )
    return manifest


def cohort_stage(
    run_dir: str | Path,
    vocab_path: str | Path,
    icd_path: str | Path | None = None,
    min_mentions: int = 1,
    force: bool = False,
) -> RunManifest:
    """Patient-level NLP-vs-ICD comparison over the run's verdicts."""
    from . import cohort as cohort_mod

    run_dir = Path(run_dir)
    manifest = RunManifest(run_dir)
    docs_file = run_dir / DOCUMENTS_FILE
    mentions_file = run_dir / MENTIONS_FILE
    verdicts_file = run_dir / VERDICTS_FILE
    icd_file = Path(icd_path) if icd_path is not None else run_dir / ICD_FILE
    report_file = run_dir / "cohort_report.csv"
    totals_file = run_dir / "cohort_totals.json"

    def action() -> None:
        corpus = corpus_mod.load_documents(docs_file)
        vocab = CompiledVocabulary.load(vocab_path)
        mentions = extract.load_mentions(mentions_file, corpus)
        verdicts = load_verdicts(verdicts_file)
        diagnoses = corpus_mod.load_icd_diagnoses(icd_file)
        nlp_map = cohort_mod.aggregate_nlp_patients(verdicts, mentions, corpus, min_mentions)
        icd_map, leftover = cohort_mod.aggregate_icd_patients(diagnoses, vocab)
        report = cohort_mod.compare_nlp_vs_icd(nlp_map, icd_map, vocab, leftover)
        cohort_mod.write_cohort_report(report, report_file, totals_file)

    run_stage(
        manifest,
        "cohort",
        [docs_file, mentions_file, verdicts_file, icd_file, vocab_path],
        [report_file, totals_file],
        {"min_mentions": min_mentions},
        action,
        force=force,
    )
    return manifest


def sweep_stage(
    run_dir: str | Path,
    vocab_path: str | Path,
    settings: FilterSettings,
    axis: str,
    values: Sequence[int],
    gold_path: str | Path | None = None,
    scoring_mode: str = evalkit.SCORING_CLOSED,
    force: bool = False,
) -> Path:
    """Few-shot or context sweep (axis 'shots' or 'context'), recorded in the
    manifest like any other stage."""
    if axis not in ("shots", "context"):
        raise ValidationError(f"sweep axis must be 'shots' or 'context', got {axis!r}")
    run_dir = Path(run_dir)
    manifest = RunManifest(run_dir)
    docs_file = run_dir / DOCUMENTS_FILE
    mentions_file = run_dir / MENTIONS_FILE
    gold_file = Path(gold_path) if gold_path is not None else run_dir / GOLD_FILE
    out_file = run_dir / ("sweep_shots.csv" if axis == "shots" else "sweep_context.csv")

    def action() -> None:
        corpus = corpus_mod.load_documents(docs_file)
        vocab = CompiledVocabulary.load(vocab_path)
        mentions = extract.load_mentions(mentions_file, corpus)
        gold = corpus_mod.load_gold_labels(gold_file, corpus)
        if axis == "shots":
            result = evalkit.run_fewshot_sweep(
                corpus, mentions, gold, vocab, settings, values, scoring_mode
            )
        else:
            result = evalkit.run_context_sweep(
                corpus, mentions, gold, vocab, settings, values, scoring_mode
            )
        evalkit.write_sweep_csv(result, out_file)

    config = _filter_config_snapshot(settings)
    config.update({"axis": axis, "values": list(values), "scoring_mode": scoring_mode})
    run_stage(
        manifest,
        f"sweep_{axis}",
        [docs_file, mentions_file, gold_file, vocab_path],
        [out_file],
        config,
        action,
        force=force,
    )
    return out_file


def run_pipeline(
    run_dir: str | Path,
    vocab_path: str | Path,
    settings: FilterSettings,
    gold_path: str | Path | None = None,
    scoring_mode: str = evalkit.SCORING_CLOSED,
    jobs: int = 1,
    force: bool = False,
) -> RunManifest:
    """extract -> filter -> evaluate in order with per-stage digest skipping.

    Requires a prior ingest; a failing stage halts the run with the manifest
    reflecting every stage that completed.
    """
    run_dir = Path(run_dir)
    manifest = RunManifest(run_dir)
    if manifest.latest("ingest") is None:
        raise StageError("extract", "run directory has no ingest record; run ingest first")
    extract_stage(run_dir, vocab_path, jobs=jobs, force=force)
    filter_stage(run_dir, vocab_path, settings, force=force)
    evaluate_stage(run_dir, gold_path, scoring_mode=scoring_mode, force=force)
    return RunManifest(run_dir)


def load_filter_settings(
    config_path: str | Path,
    mock: str | None = None,
    overrides: dict | None = None,
) -> FilterSettings:
    """Build FilterSettings from a JSON config file.

    Precedence is flag > config file > default: ``overrides`` carries
    non-None CLI flag values on the config keys they shadow.
    """
    data = json.loads(Path(config_path).read_text(encoding="utf-8"))
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    if "temperature" in data and data["temperature"] != 0:
        raise ValidationError("temperature is fixed at 0 and cannot be overridden")
    from .llmfilter import LlmEndpointConfig

    endpoint = None
    if data.get("base_url"):
        endpoint = LlmEndpointConfig(
            base_url=data["base_url"],
            model_name=data.get("model_name", "unknown"),
            max_retries=int(data.get("max_retries", 3)),
            request_timeout=float(data.get("request_timeout", 30.0)),
            max_concurrent_requests=int(data.get("max_concurrent_requests", 4)),
        )
    example_pool: tuple = ()
    if data.get("examples_path"):
        example_pool = tuple(load_example_pool(data["examples_path"]))
    return FilterSettings(
        strategy=data.get("strategy", "zero_shot"),
        shots=int(data.get("shots", 3)),
        seed=int(data.get("seed", 0)),
        context_mode=data.get("context_mode", "sentence"),
        context_words=int(data.get("context_words", 200)),
        endpoint=endpoint,
        cache_dir=data.get("cache_dir"),
        mock=mock,
        example_pool=example_pool,
    )
