"""Verdict stage: prompt rendering, endpoint client, response parsing,
caching, and the deterministic rule-based reference filter.

Prompts are rendered from template files shipped with the package and must
stay byte-stable (golden-tested); the endpoint speaks the common
chat-completions JSON shape at temperature 0, so any local inference server
exposing that interface works.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import httpx

from .corpus import GOLD_FALSE, GOLD_TRUE, Document, canonical_json_line
from .context import ContextWindow
from .errors import ParseError, TransportError, ValidationError
from .extract import Mention
from .textnorm import TERM_KIND_ABBREVIATION, fold_text, sentence_span, span_has_word_boundaries
from .vocab import CompiledVocabulary

STRATEGY_ZERO_SHOT = "zero_shot"
STRATEGY_FEW_SHOT = "few_shot"
STRATEGY_KAG = "kag"
STRATEGY_REFERENCE = "reference"
STRATEGIES = (STRATEGY_ZERO_SHOT, STRATEGY_FEW_SHOT, STRATEGY_KAG)

PARSE_CLEAN = "clean"
PARSE_SALVAGED = "salvaged"
PARSE_FAILED = "failed"

MIN_SHOTS, MAX_SHOTS = 1, 10

# Cues that flip a mention to false when they appear within this many words
# before it inside the same sentence.
NEGATION_CUES = (
    "no",
    "not",
    "denies",
    "without",
    "no signs of",
    "negative for",
    "does not have",
    "rule out",
    "r/o",
)
NEGATION_SCOPE_WORDS = 6

_SLOT_RE = re.compile(r"\{\{(REPORT|MENTION|START|END|EXAMPLES|DEFINITION)\}\}")
_ALPHA_RUN_RE = re.compile(r"[a-zA-Z]+")
_YES_NO_RE = re.compile(r"\b(yes|no)\b")


def _load_template(name: str) -> str:
    return resources.files("rarephen").joinpath("templates", f"{name}.txt").read_text("utf-8")


_TEMPLATES = {name: _load_template(name) for name in STRATEGIES}

TEMPLATE_VERSION = hashlib.sha256(
    "\x00".join(_TEMPLATES[name] for name in STRATEGIES).encode("utf-8")
).hexdigest()[:12]


@dataclass(frozen=True)
class FewShotExample:
    doc_id: str
    report_text: str
    mention_surface: str
    start: int
    end: int
    answer: str  # "yes" | "no"

    def __post_init__(self):
        if self.answer not in ("yes", "no"):
            raise ValidationError(f"few-shot answer must be yes/no, got {self.answer!r}")
        if not (0 <= self.start < self.end <= len(self.report_text)):
            raise ValidationError(
                f"few-shot example span ({self.start}, {self.end}) out of bounds"
            )
        if self.report_text[self.start:self.end] != self.mention_surface:
            raise ValidationError("few-shot example surface does not match its report slice")

    def render(self, number: int) -> str:
        return (
            f"Example {number}. {self.report_text}. {self.mention_surface}. "
            f"({self.start}, {self.end}). {self.answer.upper()}"
        )

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "report_text": self.report_text,
            "mention_surface": self.mention_surface,
            "start": self.start,
            "end": self.end,
            "answer": self.answer,
        }


@dataclass(frozen=True)
class PromptSpec:
    strategy: str
    rendered_text: str
    shot_count: int | None = None
    definition_text: str | None = None
    template_version: str = TEMPLATE_VERSION

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.rendered_text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str
    model_name: str
    max_retries: int = 3
    request_timeout: float = 30.0
    max_concurrent_requests: int = 4
    backoff_base: float = 1.0

    # fixed by design, deliberately not a constructor argument
    @property
    def temperature(self) -> int:
        return 0


@dataclass(frozen=True)
class Verdict:
    doc_id: str
    start: int
    end: int
    label: str | None  # true_mention / false_mention; None only when parse failed
    raw_response: str
    parse_status: str
    model_name: str
    strategy: str
    latency_ms: int = 0
    cache_hit: bool = False
    kag_fallback: bool = False

    def __post_init__(self):
        if self.parse_status == PARSE_FAILED and self.label is not None:
            raise ValidationError("failed verdicts cannot carry a label")
        if self.parse_status in (PARSE_CLEAN, PARSE_SALVAGED) and self.label is None:
            raise ValidationError("clean/salvaged verdicts must carry a label")

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.doc_id, self.start, self.end)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "start": self.start,
            "end": self.end,
            "label": self.label,
            "raw_response": self.raw_response,
            "parse_status": self.parse_status,
            "model_name": self.model_name,
            "strategy": self.strategy,
            "latency_ms": self.latency_ms,
            "cache_hit": self.cache_hit,
            "kag_fallback": self.kag_fallback,
        }


def build_prompt(
    strategy: str,
    mention: Mention,
    window: ContextWindow,
    examples: Sequence[FewShotExample] = (),
    definition: str | None = None,
) -> PromptSpec:
    """Render one prompt, byte-stable for fixed inputs.

    Start/end indices are the mention's offsets *within the window text*,
    since that is the report the model actually reads.
    """
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy {strategy!r}")
    if window.doc_id != mention.doc_id or (window.start, window.end) != (mention.start, mention.end):
        raise ValidationError(
            f"window {(window.doc_id, window.start, window.end)} does not describe "
            f"mention {mention.key}"
        )
    if window.surface != mention.surface:
        raise ValidationError("window does not re-slice to the mention surface")

    if strategy == STRATEGY_FEW_SHOT:
        if not (MIN_SHOTS <= len(examples) <= MAX_SHOTS):
            raise ValidationError(
                f"few_shot requires {MIN_SHOTS}..{MAX_SHOTS} examples, got {len(examples)}"
            )
    elif examples:
        raise ValidationError(f"{strategy} takes no few-shot examples")
    if strategy == STRATEGY_KAG:
        if not definition:
            raise ValidationError("kag requires a concept definition")
    elif definition is not None:
        raise ValidationError(f"{strategy} takes no definition")

    slots = {
        "REPORT": window.window_text,
        "MENTION": mention.surface,
        "START": str(window.mention_start_in_window),
        "END": str(window.mention_end_in_window),
        "EXAMPLES": "\n".join(ex.render(i) for i, ex in enumerate(examples, start=1)),
        "DEFINITION": definition or "",
    }
    rendered = _SLOT_RE.sub(lambda m: slots[m.group(1)], _TEMPLATES[strategy])
    return PromptSpec(
        strategy=strategy,
        rendered_text=rendered,
        shot_count=len(examples) if strategy == STRATEGY_FEW_SHOT else None,
        definition_text=definition if strategy == STRATEGY_KAG else None,
    )


def select_few_shot_examples(
    pool: Sequence[FewShotExample],
    k: int,
    seed: int,
    excluded_doc_ids: Iterable[str] = (),
) -> list[FewShotExample]:
    """Draw k examples without replacement, deterministically for a seed,
    never from excluded documents."""
    if not (MIN_SHOTS <= k <= MAX_SHOTS):
        raise ValidationError(f"shot count must be in [{MIN_SHOTS}, {MAX_SHOTS}], got {k}")
    excluded = set(excluded_doc_ids)
    eligible = [ex for ex in pool if ex.doc_id not in excluded]
    if len(eligible) < k:
        raise ValidationError(
            f"example pool too small: need {k}, have {len(eligible)} after exclusion"
        )
    return random.Random(seed).sample(eligible, k)


def parse_verdict(raw: str) -> tuple[str | None, str]:
    """Map a model response to (label, parse_status); never raises.

    Clean: the first alphabetic token is yes/no. Salvaged: exactly one
    word-bounded yes/no occurs anywhere. Anything else fails.
    """
    lowered = raw.strip().lower()
    first = _ALPHA_RUN_RE.search(lowered)
    if first and first.group() in ("yes", "no"):
        return (GOLD_TRUE if first.group() == "yes" else GOLD_FALSE, PARSE_CLEAN)
    occurrences = _YES_NO_RE.findall(lowered)
    if len(occurrences) == 1:
        return (GOLD_TRUE if occurrences[0] == "yes" else GOLD_FALSE, PARSE_SALVAGED)
    return (None, PARSE_FAILED)


class VerdictCache:
    """File-per-response cache keyed by template, strategy, prompt and model.

    Concurrent writers are safe: identical keys hold identical values, and
    writes go through an atomic rename.
    """

    def __init__(self, cache_dir: str | Path):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key_for(prompt: PromptSpec, model_name: str) -> str:
        material = "\n".join(
            [prompt.template_version, prompt.strategy, prompt.digest, model_name]
        )
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def get(self, prompt: PromptSpec, model_name: str) -> str | None:
        path = self._path(self.key_for(prompt, model_name))
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["raw_response"]

    def put(self, prompt: PromptSpec, model_name: str, raw_response: str) -> None:
        path = self._path(self.key_for(prompt, model_name))
        tmp = path.with_suffix(f".tmp{os.getpid()}")
        tmp.write_text(
            json.dumps({"raw_response": raw_response}, ensure_ascii=False), encoding="utf-8"
        )
        os.replace(tmp, path)


class LlmClient:
    """Minimal chat-completions client with retries and read-through cache."""

    def __init__(
        self,
        config: LlmEndpointConfig,
        cache: VerdictCache | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.config = config
        self.cache = cache
        self._client = httpx.Client(
            base_url=config.base_url,
            timeout=config.request_timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "LlmClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _request(self, prompt: PromptSpec) -> str:
        payload = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt.rendered_text}],
            "temperature": self.config.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff_base * (2 ** (attempt - 1)))
            try:
                response = self._client.post("/v1/chat/completions", json=payload)
                response.raise_for_status()
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, json.JSONDecodeError) as exc:
                last_error = exc
        raise TransportError(
            f"endpoint failed after {self.config.max_retries + 1} attempts: {last_error}"
        )

    def classify_mention(self, prompt: PromptSpec, mention: Mention) -> Verdict:
        """One verdict for one rendered prompt; raises TransportError only
        after exhausting retries (the caller records coverage loss)."""
        cached = self.cache.get(prompt, self.config.model_name) if self.cache else None
        if cached is not None:
            label, status = parse_verdict(cached)
            return Verdict(
                doc_id=mention.doc_id,
                start=mention.start,
                end=mention.end,
                label=label,
                raw_response=cached,
                parse_status=status,
                model_name=self.config.model_name,
                strategy=prompt.strategy,
                latency_ms=0,
                cache_hit=True,
            )
        started = time.perf_counter()
        raw = self._request(prompt)
        latency_ms = int((time.perf_counter() - started) * 1000)
        if self.cache:
            self.cache.put(prompt, self.config.model_name, raw)
        label, status = parse_verdict(raw)
        return Verdict(
            doc_id=mention.doc_id,
            start=mention.start,
            end=mention.end,
            label=label,
            raw_response=raw,
            parse_status=status,
            model_name=self.config.model_name,
            strategy=prompt.strategy,
            latency_ms=latency_ms,
            cache_hit=False,
        )


def _cue_tokens(text: str) -> list[str]:
    """Whitespace tokens folded and stripped of edge punctuation (slashes
    survive so 'r/o' stays intact)."""
    tokens = []
    for raw in text.split():
        tok = fold_text(raw)
        start, end = 0, len(tok)
        while start < end and not (tok[start].isalnum() or tok[start] == "/"):
            start += 1
        while end > start and not (tok[end - 1].isalnum() or tok[end - 1] == "/"):
            end -= 1
        if start < end:
            tokens.append(tok[start:end])
    return tokens


_CUE_WORDLISTS = [cue.split() for cue in NEGATION_CUES]


def negation_cue_before(window: ContextWindow) -> bool:
    """True when a negation cue sits within the scope window before the
    mention, inside the mention's sentence."""
    text = window.window_text
    sent_start, _ = sentence_span(text, window.mention_start_in_window)
    preceding = text[sent_start:window.mention_start_in_window]
    tokens = _cue_tokens(preceding)[-NEGATION_SCOPE_WORDS:]
    for cue_words in _CUE_WORDLISTS:
        width = len(cue_words)
        for i in range(len(tokens) - width + 1):
            if tokens[i:i + width] == cue_words:
                return True
    return False


def expansion_present(mention: Mention, doc: Document, vocab: CompiledVocabulary) -> bool:
    """Does any non-abbreviation term of the mention's concept occur in the
    document (word-bounded, case-insensitive)?"""
    concept = vocab.concept_for(mention.ordo_id, mention.cui)
    if concept is None:
        raise ValidationError(f"mention {mention.key} not resolvable in vocabulary")
    folded_doc = fold_text(doc.text)
    for term in concept.all_terms:
        if concept.term_kind(term) == TERM_KIND_ABBREVIATION:
            continue
        needle = fold_text(term)
        pos = 0
        while True:
            i = folded_doc.find(needle, pos)
            if i < 0:
                break
            pos = i + 1
            if span_has_word_boundaries(folded_doc, i, i + len(needle)):
                return True
    return False


def rule_based_reference_filter(
    mention: Mention,
    window: ContextWindow,
    doc: Document,
    vocab: CompiledVocabulary,
) -> Verdict:
    """Deterministic offline stand-in for the LLM verdict.

    False when a negation cue precedes the mention in-sentence, or when an
    abbreviation mention has no expansion of its concept anywhere in the
    document; true otherwise.
    """
    is_false = negation_cue_before(window)
    if not is_false and mention.term_kind == TERM_KIND_ABBREVIATION:
        is_false = not expansion_present(mention, doc, vocab)
    label = GOLD_FALSE if is_false else GOLD_TRUE
    return Verdict(
        doc_id=mention.doc_id,
        start=mention.start,
        end=mention.end,
        label=label,
        raw_response="no" if is_false else "yes",
        parse_status=PARSE_CLEAN,
        model_name="rule-reference",
        strategy=STRATEGY_REFERENCE,
        latency_ms=0,
        cache_hit=False,
    )


@dataclass(frozen=True)
class FilterSettings:
    """Everything one filter pass needs besides the corpus and mentions."""

    strategy: str = STRATEGY_ZERO_SHOT
    shots: int = 3
    seed: int = 0
    context_mode: str = "sentence"
    context_words: int = 200
    endpoint: LlmEndpointConfig | None = None
    cache_dir: str | None = None
    mock: str | None = None  # None (live) | "rule" | "replay"
    example_pool: tuple[FewShotExample, ...] = ()
    transport: httpx.BaseTransport | None = field(default=None, compare=False)

    def describe(self) -> dict:
        return {
            "strategy": self.strategy,
            "shots": self.shots,
            "seed": self.seed,
            "context_mode": self.context_mode,
            "context_words": self.context_words,
            "mock": self.mock,
            "model_name": self.endpoint.model_name if self.endpoint else None,
            "template_version": TEMPLATE_VERSION,
        }


@dataclass
class FilterRunResult:
    verdicts: list[Verdict]
    summary: dict


def run_filter(corpus, mentions: Sequence[Mention], vocab: CompiledVocabulary,
               settings: FilterSettings) -> FilterRunResult:
    """One verdict per mention, in (doc_id, start, end) order.

    ``mock="rule"`` uses the deterministic reference filter with no network
    or cache; ``mock="replay"`` answers purely from the cache directory and
    counts misses as coverage loss; otherwise requests go to the configured
    endpoint with bounded concurrency.
    """
    from .context import extract_window  # local import to keep module load light

    ordered = sorted(mentions, key=lambda m: (m.doc_id, m.start, m.end))
    windows = [
        extract_window(corpus.get(m.doc_id), m, settings.context_mode, settings.context_words)
        for m in ordered
    ]

    summary: dict = {
        "mentions": len(ordered),
        "verdicts": 0,
        "parse_clean": 0,
        "parse_salvaged": 0,
        "parse_failed": 0,
        "transport_failures": 0,
        "cache_hits": 0,
        "kag_fallbacks": 0,
        "settings": settings.describe(),
    }

    verdicts: list[Verdict] = []
    if settings.mock == "rule":
        for mention, window in zip(ordered, windows):
            verdicts.append(
                rule_based_reference_filter(mention, window, corpus.get(mention.doc_id), vocab)
            )
    else:
        examples: list[FewShotExample] = []
        if settings.strategy == STRATEGY_FEW_SHOT:
            examples = select_few_shot_examples(
                settings.example_pool, settings.shots, settings.seed, corpus.doc_ids()
            )
            evaluated_docs = {m.doc_id for m in ordered}
            leaked = [ex.doc_id for ex in examples if ex.doc_id in evaluated_docs]
            if leaked:
                raise ValidationError(f"few-shot examples share evaluated doc_ids: {leaked}")

        prompts: list[PromptSpec] = []
        fallback_flags: list[bool] = []
        for mention, window in zip(ordered, windows):
            strategy = settings.strategy
            definition = None
            fallback = False
            if strategy == STRATEGY_KAG:
                concept = vocab.concept_for(mention.ordo_id, mention.cui)
                if concept is None:
                    raise ValidationError(
                        f"mention {mention.key} not resolvable in vocabulary"
                    )
                if concept.definition:
                    definition = concept.definition
                else:
                    strategy = STRATEGY_ZERO_SHOT  # tagged fallback
                    fallback = True
            prompts.append(
                build_prompt(
                    strategy,
                    mention,
                    window,
                    examples=examples if strategy == STRATEGY_FEW_SHOT else (),
                    definition=definition,
                )
            )
            fallback_flags.append(fallback)

        cache = VerdictCache(settings.cache_dir) if settings.cache_dir else None
        if settings.mock == "replay":
            if cache is None:
                raise ValidationError("replay mode requires a cache directory")
            for mention, prompt, fallback in zip(ordered, prompts, fallback_flags):
                model = settings.endpoint.model_name if settings.endpoint else "replay"
                raw = cache.get(prompt, model)
                if raw is None:
                    summary["transport_failures"] += 1
                    continue
                label, status = parse_verdict(raw)
                verdicts.append(
                    Verdict(
                        doc_id=mention.doc_id,
                        start=mention.start,
                        end=mention.end,
                        label=label,
                        raw_response=raw,
                        parse_status=status,
                        model_name=model,
                        strategy=prompt.strategy,
                        latency_ms=0,
                        cache_hit=True,
                        kag_fallback=fallback,
                    )
                )
        else:
            if settings.endpoint is None:
                raise ValidationError("live filtering requires an endpoint config")
            from concurrent.futures import ThreadPoolExecutor

            client = LlmClient(settings.endpoint, cache=cache, transport=settings.transport)
            results: list[Verdict | None] = [None] * len(ordered)

            def work(i: int) -> None:
                try:
                    verdict = client.classify_mention(prompts[i], ordered[i])
                except TransportError:
                    return
                if fallback_flags[i]:
                    verdict = replace(verdict, kag_fallback=True)
                results[i] = verdict

            workers = max(1, settings.endpoint.max_concurrent_requests)
            try:
                if workers == 1:
                    for i in range(len(ordered)):
                        work(i)
                else:
                    with ThreadPoolExecutor(max_workers=workers) as pool:
                        list(pool.map(work, range(len(ordered))))
            finally:
                client.close()
            for verdict in results:
                if verdict is None:
                    summary["transport_failures"] += 1
                else:
                    verdicts.append(verdict)

    for verdict in verdicts:
        summary["verdicts"] += 1
        summary[f"parse_{verdict.parse_status}"] += 1
        summary["cache_hits"] += int(verdict.cache_hit)
        summary["kag_fallbacks"] += int(verdict.kag_fallback)
    return FilterRunResult(verdicts=verdicts, summary=summary)


def write_verdicts(verdicts: Iterable[Verdict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for verdict in verdicts:
            fh.write(canonical_json_line(verdict.to_dict()))


def load_verdicts(path: str | Path) -> list[Verdict]:
    path = Path(path)
    verdicts = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                verdicts.append(
                    Verdict(
                        doc_id=obj["doc_id"],
                        start=obj["start"],
                        end=obj["end"],
                        label=obj["label"],
                        raw_response=obj["raw_response"],
                        parse_status=obj["parse_status"],
                        model_name=obj["model_name"],
                        strategy=obj["strategy"],
                        latency_ms=obj.get("latency_ms", 0),
                        cache_hit=obj.get("cache_hit", False),
                        kag_fallback=obj.get("kag_fallback", False),
                    )
                )
            except (KeyError, json.JSONDecodeError) as exc:
                raise ParseError(f"bad verdict record: {exc}", path=str(path), line=lineno) from exc
    return verdicts


def load_example_pool(path: str | Path) -> list[FewShotExample]:
    path = Path(path)
    pool = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pool.append(
                    FewShotExample(
                        doc_id=obj["doc_id"],
                        report_text=obj["report_text"],
                        mention_surface=obj["mention_surface"],
                        start=obj["start"],
                        end=obj["end"],
                        answer=obj["answer"],
                    )
                )
            except (KeyError, json.JSONDecodeError, ValidationError) as exc:
                raise ParseError(f"bad example record: {exc}", path=str(path), line=lineno) from exc
    return pool


def write_example_pool(pool: Iterable[FewShotExample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for example in pool:
            fh.write(canonical_json_line(example.to_dict()))
