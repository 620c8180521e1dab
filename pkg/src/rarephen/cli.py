"""Command-line entry point wiring all stages into reproducible runs."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import evalkit, pipeline
from .errors import ParseError, RarephenError, StageError, ValidationError
from .vocab import DEFAULT_SEMANTIC_TYPES, build_vocabulary

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_STAGE = 2


def _fail(exc: RarephenError) -> None:
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, StageError):
        sys.exit(EXIT_STAGE)
    sys.exit(EXIT_VALIDATION)


@click.group()
def main() -> None:
    """Rare-disease text phenotyping pipeline."""


@main.command("build-vocab")
@click.option("--ordo", "ordo_path", required=True, type=click.Path(exists=True))
@click.option("--umls", "umls_path", required=True, type=click.Path(exists=True))
@click.option("--icd", "icd_path", type=click.Path(exists=True))
@click.option("--semantic-types", default=",".join(sorted(DEFAULT_SEMANTIC_TYPES)),
              show_default=True, help="Comma-separated UMLS semantic type allowlist.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path())
def build_vocab_cmd(ordo_path, umls_path, icd_path, semantic_types, out_path, report_path):
    """Compile the rare-disease matching vocabulary from source tables."""
    try:
        allowed = {t.strip() for t in semantic_types.split(",") if t.strip()}
        vocab, report = build_vocabulary(ordo_path, umls_path, icd_path, allowed)
        vocab.save(out_path)
        if report_path:
            Path(report_path).write_text(
                json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
        click.echo(
            f"compiled {len(vocab)} concepts, {vocab.build_meta['term_count']} terms "
            f"(linked {report.linked}, ambiguous {report.ambiguous}, unlinked {report.unlinked})"
        )
    except (ParseError, ValidationError) as exc:
        _fail(exc)


@main.command("ingest")
@click.option("--docs", "docs_path", required=True, type=click.Path(exists=True))
@click.option("--icd", "icd_path", type=click.Path(exists=True))
@click.option("--gold", "gold_path", type=click.Path(exists=True))
@click.option("--run-dir", required=True, type=click.Path())
@click.option("--force", is_flag=True, help="Re-run even when digests match.")
def ingest_cmd(docs_path, icd_path, gold_path, run_dir, force):
    """Validate and copy corpus inputs into a run directory."""
    try:
        pipeline.ingest_stage(run_dir, docs_path, icd_path, gold_path, force=force)
        corpus = corpus_mod.load_documents(Path(run_dir) / pipeline.DOCUMENTS_FILE)
        click.echo(f"ingested {len(corpus)} documents into {run_dir}")
    except RarephenError as exc:
        _fail(exc)


@main.command("stats")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
def stats_cmd(run_dir):
    """Word-count statistics for the ingested corpus."""
    try:
        corpus = corpus_mod.load_documents(Path(run_dir) / pipeline.DOCUMENTS_FILE)
        stats = corpus.stats()
        click.echo(
            f"count={stats['count']} min={stats['min_words']} "
            f"mean={stats['mean_words']:.1f} max={stats['max_words']}"
        )
    except RarephenError as exc:
        _fail(exc)


@main.command("extract")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--jobs", default=1, show_default=True)
@click.option("--force", is_flag=True)
def extract_cmd(run_dir, vocab_path, jobs, force):
    """Dictionary mention extraction over the run corpus."""
    try:
        pipeline.extract_stage(run_dir, vocab_path, jobs=jobs, force=force)
        summary = json.loads(
            (Path(run_dir) / pipeline.EXTRACT_SUMMARY_FILE).read_text(encoding="utf-8")
        )
        click.echo(
            f"scanned {summary['documents_scanned']} documents, "
            f"found {summary['mentions_found']} mentions"
        )
    except RarephenError as exc:
        _fail(exc)


def _parse_mock(mock_spec):
    """--mock rule|replay:<dir> -> (mode, replay_cache_dir)."""
    if not mock_spec:
        return None, None
    if mock_spec == "rule":
        return "rule", None
    if mock_spec.startswith("replay:"):
        return "replay", mock_spec.split(":", 1)[1]
    raise ValidationError(f"unknown --mock value {mock_spec!r}")


def _settings_from(config_path, mock_spec, context_mode=None, context_words=None, seed=None):
    mock, replay_dir = _parse_mock(mock_spec)
    settings = pipeline.load_filter_settings(
        config_path,
        mock=mock,
        overrides={"context_mode": context_mode, "context_words": context_words, "seed": seed},
    )
    if replay_dir is not None:
        from dataclasses import replace

        settings = replace(settings, cache_dir=replay_dir)
    return settings


@main.command("filter")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--mock", "mock_spec", help="'rule' or 'replay:<cache-dir>'.")
@click.option("--context-mode", type=click.Choice(["words", "sentence", "full"]),
              help="Overrides the config file.")
@click.option("--context-words", type=int, help="Overrides the config file.")
@click.option("--seed", type=int, help="Overrides the config file.")
@click.option("--force", is_flag=True)
def filter_cmd(run_dir, config_path, vocab_path, mock_spec, context_mode,
               context_words, seed, force):
    """LLM (or mock) verdicts for every extracted mention."""
    try:
        settings = _settings_from(config_path, mock_spec, context_mode, context_words, seed)
        pipeline.filter_stage(run_dir, vocab_path, settings, force=force)
        summary = json.loads(
            (Path(run_dir) / pipeline.FILTER_SUMMARY_FILE).read_text(encoding="utf-8")
        )
        click.echo(
            f"verdicts {summary['verdicts']}/{summary['mentions']} "
            f"(failed parses {summary['parse_failed']}, "
            f"transport failures {summary['transport_failures']})"
        )
    except RarephenError as exc:
        _fail(exc)


@main.command("evaluate")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--gold", "gold_path", type=click.Path(exists=True),
              help="Defaults to the ingested gold file.")
@click.option("--scoring-mode", type=click.Choice(["closed", "open"]), default="closed",
              show_default=True)
@click.option("--force", is_flag=True)
def evaluate_cmd(run_dir, gold_path, scoring_mode, force):
    """Score verdicts against gold labels."""
    try:
        pipeline.evaluate_stage(run_dir, gold_path, scoring_mode=scoring_mode, force=force)
        report = json.loads((Path(run_dir) / pipeline.METRICS_FILE).read_text(encoding="utf-8"))
        click.echo(evalkit.render_metrics_table(report))
    except RarephenError as exc:
        _fail(exc)


@main.command("run")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--mock", "mock_spec", help="'rule' or 'replay:<cache-dir>'.")
@click.option("--gold", "gold_path", type=click.Path(exists=True))
@click.option("--scoring-mode", type=click.Choice(["closed", "open"]), default="closed")
@click.option("--context-mode", type=click.Choice(["words", "sentence", "full"]),
              help="Overrides the config file.")
@click.option("--context-words", type=int, help="Overrides the config file.")
@click.option("--seed", type=int, help="Overrides the config file.")
@click.option("--jobs", default=1, show_default=True)
@click.option("--force", is_flag=True)
def run_cmd(run_dir, vocab_path, config_path, mock_spec, gold_path, scoring_mode,
            context_mode, context_words, seed, jobs, force):
    """Full pipeline: extract, filter, evaluate (digest-gated per stage)."""
    try:
        settings = _settings_from(config_path, mock_spec, context_mode, context_words, seed)
        pipeline.run_pipeline(
            run_dir, vocab_path, settings, gold_path,
            scoring_mode=scoring_mode, jobs=jobs, force=force,
        )
        click.echo(f"pipeline complete in {run_dir}")
    except RarephenError as exc:
        _fail(exc)


@main.command("sweep")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--axis", type=click.Choice(["shots", "context"]), required=True)
@click.option("--values", required=True, help="Comma-separated increasing integers.")
@click.option("--mock", "mock_spec", help="'rule' to use the reference filter.")
@click.option("--gold", "gold_path", type=click.Path(exists=True))
@click.option("--scoring-mode", type=click.Choice(["closed", "open"]), default="closed")
@click.option("--seed", type=int, help="Overrides the config file.")
@click.option("--force", is_flag=True)
def sweep_cmd(run_dir, vocab_path, config_path, axis, values, mock_spec, gold_path,
              scoring_mode, seed, force):
    """Few-shot-count or context-length sweep, one filter pass per value."""
    try:
        settings = _settings_from(config_path, mock_spec, seed=seed)
        axis_values = [int(v) for v in values.split(",") if v.strip()]
        out = pipeline.sweep_stage(
            run_dir, vocab_path, settings, axis, axis_values,
            gold_path, scoring_mode, force=force,
        )
        click.echo(f"wrote {out}")
    except RarephenError as exc:
        _fail(exc)


@main.command("kappa")
@click.option("--labels-a", required=True, type=click.Path(exists=True))
@click.option("--labels-b", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), help="Optional kappa.json path.")
def kappa_cmd(labels_a, labels_b, out_path):
    """Cohen's kappa between two mention-label JSONL files."""
    try:
        result = evalkit.kappa_from_files(labels_a, labels_b)
        payload = json.dumps(result.to_dict(), indent=2, sort_keys=True)
        if out_path:
            Path(out_path).write_text(payload + "\n", encoding="utf-8")
        click.echo(payload)
    except RarephenError as exc:
        _fail(exc)


@main.command("cohort")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--icd", "icd_path", type=click.Path(exists=True),
              help="Defaults to the ingested diagnosis table.")
@click.option("--min-mentions", default=1, show_default=True)
@click.option("--force", is_flag=True)
def cohort_cmd(run_dir, vocab_path, icd_path, min_mentions, force):
    """Patient-level NLP-vs-ICD comparison report."""
    try:
        run_dir = Path(run_dir)
        pipeline.cohort_stage(run_dir, vocab_path, icd_path, min_mentions, force=force)
        totals = json.loads((run_dir / "cohort_totals.json").read_text(encoding="utf-8"))
        click.echo(
            f"diseases {totals['distinct_diseases']} patients {totals['distinct_patients']} "
            f"categories {totals['categories']}"
        )
    except RarephenError as exc:
        _fail(exc)


@main.command("serve")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--guideline", "guideline_path", type=click.Path(exists=True))
@click.option("--annotator-a", default="a", show_default=True)
@click.option("--annotator-b", default="b", show_default=True)
@click.option("--adjudicator", default="adjudicator", show_default=True)
@click.option("--shuffle-seed", type=int, help="Shuffle task order (default: mention order).")
@click.option("--ui-dir", type=click.Path(exists=True),
              help="Static frontend bundle to serve at /.")
def serve_cmd(run_dir, port, host, guideline_path, annotator_a, annotator_b,
              adjudicator, shuffle_seed, ui_dir):
    """Annotation service over the run's extracted mentions."""
    try:
        import uvicorn

        from .annosvc import build_session, create_app
        from .extract import load_mentions

        run_dir = Path(run_dir)
        corpus = corpus_mod.load_documents(run_dir / pipeline.DOCUMENTS_FILE)
        mentions = load_mentions(run_dir / pipeline.MENTIONS_FILE, corpus)
        guideline = (
            Path(guideline_path).read_text(encoding="utf-8")
            if guideline_path
            else "Label each mention yes (true mention) or no (negated, hypothetical, "
                 "or otherwise not indicating the disease)."
        )
        anno_dir = run_dir / "annotation"
        anno_dir.mkdir(exist_ok=True)
        events_path = anno_dir / "events.jsonl"
        session, duplicates = build_session(
            mentions,
            corpus,
            guideline,
            annotator_a=annotator_a,
            annotator_b=annotator_b,
            adjudicator=adjudicator,
            events_path=events_path,
            shuffle_seed=shuffle_seed,
        )
        snapshot = {
            "task_count": len(session.tasks),
            "annotators": session.annotator_ids,
            "duplicates_collapsed": duplicates,
            "adjudicator_sees_prior_labels": session.adjudicator_sees_prior_labels,
        }
        (anno_dir / "session.json").write_text(
            json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        if events_path.exists():
            with events_path.open("r", encoding="utf-8") as fh:
                events = [json.loads(line) for line in fh if line.strip()]
            if events:
                session.replay_from(events)
                click.echo(f"replayed {len(events)} events")
        if duplicates:
            click.echo(f"warning: collapsed {duplicates} duplicate mention keys")
        app = create_app(
            session,
            corpus=corpus,
            static_dir=ui_dir,
            export_default=anno_dir / "gold_export.jsonl",
        )
        click.echo(f"serving {len(session.tasks)} tasks on http://{host}:{port}")
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except RarephenError as exc:
        _fail(exc)


@main.command("fixtures")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--seed", default=42, show_default=True)
@click.option("--concepts", default=200, show_default=True)
@click.option("--documents", default=200, show_default=True)
@click.option("--mean-words", default=1669, show_default=True)
@click.option("--positive", default=80, show_default=True)
@click.option("--abbrev-expanded", default=20, show_default=True)
@click.option("--negated", default=50, show_default=True)
@click.option("--hypothetical", default=25, show_default=True)
@click.option("--ambiguous-abbrev", default=25, show_default=True)
def fixtures_cmd(out_dir, seed, concepts, documents, mean_words, positive,
                 abbrev_expanded, negated, hypothetical, ambiguous_abbrev):
    """Generate the synthetic corpus, vocabulary sources, and gold labels."""
    try:
        from .fixtures import FixtureParams, generate_fixtures

        params = FixtureParams(
            seed=seed,
            concepts=concepts,
            documents=documents,
            target_mean_words=mean_words,
            positive=positive,
            abbrev_expanded=abbrev_expanded,
            negated=negated,
            hypothetical=hypothetical,
            ambiguous_abbrev=ambiguous_abbrev,
        )
        fixture_set = generate_fixtures(out_dir, params)
        click.echo(
            f"fixtures in {out_dir}: {fixture_set.summary['documents']} docs, "
            f"{fixture_set.summary['gold_true']} true / "
            f"{fixture_set.summary['gold_false']} false planted mentions"
        )
    except RarephenError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
