"""Annotation service: two annotators label mention tasks, disagreements go
to an adjudicator, agreement is tracked as live kappa, and the finished
session exports gold labels.

State is an append-only event log plus a creation-time snapshot; replaying
the log from an empty session reconstructs the exact state. All mutations
serialize through one lock with first-write-wins semantics.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from pydantic import BaseModel

from .context import MODE_FULL, MODE_SENTENCE, extract_window
from .corpus import GOLD_LABELS, Corpus, GoldLabel, write_gold_labels
from .errors import ConflictError, ValidationError
from .evalkit import cohens_kappa
from .extract import Mention

SCHEMA_VERSION = 1

ROLE_A = "annotator_a"
ROLE_B = "annotator_b"
ROLE_ADJUDICATOR = "adjudicator"

STATUS_UNLABELED = "unlabeled"
STATUS_LABELED_ONE = "labeled_one"
STATUS_LABELED_BOTH = "labeled_both"  # terminal: both labeled and agreed
STATUS_DISAGREED = "disagreed"
STATUS_ADJUDICATED = "adjudicated"
STATUSES = (
    STATUS_UNLABELED,
    STATUS_LABELED_ONE,
    STATUS_LABELED_BOTH,
    STATUS_DISAGREED,
    STATUS_ADJUDICATED,
)
TERMINAL_STATUSES = {STATUS_LABELED_BOTH, STATUS_ADJUDICATED}


@dataclass
class AnnotationTask:
    task_id: int
    doc_id: str
    start: int
    end: int
    surface: str
    context_text: str
    context_start_in_doc: int
    highlight_start: int
    highlight_end: int
    labels: dict[str, str] = field(default_factory=dict)  # role -> label
    adjudicated_label: str | None = None

    @property
    def status(self) -> str:
        if self.adjudicated_label is not None:
            return STATUS_ADJUDICATED
        if ROLE_A in self.labels and ROLE_B in self.labels:
            if self.labels[ROLE_A] == self.labels[ROLE_B]:
                return STATUS_LABELED_BOTH
            return STATUS_DISAGREED
        if self.labels:
            return STATUS_LABELED_ONE
        return STATUS_UNLABELED

    @property
    def final_label(self) -> str | None:
        if self.adjudicated_label is not None:
            return self.adjudicated_label
        if self.status == STATUS_LABELED_BOTH:
            return self.labels[ROLE_A]
        return None


@dataclass(frozen=True)
class AnnotationEvent:
    seq: int
    task_id: int
    annotator_id: str
    role: str
    label: str
    timestamp: str

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "task_id": self.task_id,
            "annotator_id": self.annotator_id,
            "role": self.role,
            "label": self.label,
            "timestamp": self.timestamp,
        }


class AnnotationSession:
    """In-memory session state; all mutations go through submit/adjudicate."""

    def __init__(
        self,
        tasks: list[AnnotationTask],
        guideline: str,
        annotator_a: str = "a",
        annotator_b: str = "b",
        adjudicator: str = "adjudicator",
        events_path: str | Path | None = None,
    ):
        if not tasks:
            raise ValidationError("a session needs at least one task")
        self.tasks: dict[int, AnnotationTask] = {t.task_id: t for t in tasks}
        self.order = sorted(self.tasks)
        self.guideline = guideline
        self.roles = {annotator_a: ROLE_A, annotator_b: ROLE_B, adjudicator: ROLE_ADJUDICATOR}
        self.annotator_ids = {ROLE_A: annotator_a, ROLE_B: annotator_b,
                              ROLE_ADJUDICATOR: adjudicator}
        self.events: list[AnnotationEvent] = []
        self.events_path = Path(events_path) if events_path else None
        self._lock = threading.RLock()
        self.adjudicator_sees_prior_labels = True  # recorded in session metadata

    # -- role plumbing ---------------------------------------------------

    def role_of(self, annotator_id: str) -> str:
        role = self.roles.get(annotator_id)
        if role is None:
            raise ValidationError(f"unknown annotator {annotator_id!r}")
        return role

    def _task(self, task_id: int) -> AnnotationTask:
        task = self.tasks.get(task_id)
        if task is None:
            raise ValidationError(f"unknown task {task_id}")
        return task

    # -- mutations ---------------------------------------------------------

    def _append_event(self, task_id: int, annotator_id: str, role: str, label: str) -> None:
        event = AnnotationEvent(
            seq=len(self.events) + 1,
            task_id=task_id,
            annotator_id=annotator_id,
            role=role,
            label=label,
            timestamp=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        )
        self.events.append(event)
        if self.events_path is not None:
            with self.events_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")

    def submit_label(self, task_id: int, annotator_id: str, label: str) -> str:
        """Label a task as annotator a or b; returns the new status."""
        if label not in GOLD_LABELS:
            raise ValidationError(f"label must be one of {sorted(GOLD_LABELS)}, got {label!r}")
        with self._lock:
            role = self.role_of(annotator_id)
            if role == ROLE_ADJUDICATOR:
                raise ValidationError("the adjudicator labels through the adjudicate endpoint")
            task = self._task(task_id)
            if task.status in TERMINAL_STATUSES or task.status == STATUS_DISAGREED:
                raise ConflictError(
                    f"task {task_id} is {task.status} and accepts no annotator labels"
                )
            if role in task.labels:
                raise ConflictError(f"{annotator_id} already labeled task {task_id}")
            task.labels[role] = label
            self._append_event(task_id, annotator_id, role, label)
            return task.status

    def adjudicate(self, task_id: int, annotator_id: str, label: str) -> str:
        """Resolve a disagreed task; returns the new status."""
        if label not in GOLD_LABELS:
            raise ValidationError(f"label must be one of {sorted(GOLD_LABELS)}, got {label!r}")
        with self._lock:
            role = self.role_of(annotator_id)
            if role != ROLE_ADJUDICATOR:
                raise ValidationError(f"{annotator_id} is not the adjudicator")
            task = self._task(task_id)
            if task.status == STATUS_ADJUDICATED:
                raise ConflictError(f"task {task_id} is already adjudicated")
            if task.status != STATUS_DISAGREED:
                raise ValidationError(
                    f"task {task_id} is {task.status}; only disagreed tasks are adjudicated"
                )
            task.adjudicated_label = label
            self._append_event(task_id, annotator_id, role, label)
            return task.status

    # -- queries -----------------------------------------------------------

    def next_task(self, annotator_id: str) -> AnnotationTask | None:
        """Lowest-id task this annotator has not labeled and that still
        accepts labels; None when the annotator is done."""
        with self._lock:
            role = self.role_of(annotator_id)
            if role == ROLE_ADJUDICATOR:
                for task_id in self.order:
                    if self.tasks[task_id].status == STATUS_DISAGREED:
                        return self.tasks[task_id]
                return None
            for task_id in self.order:
                task = self.tasks[task_id]
                if role in task.labels:
                    continue
                if task.status in (STATUS_UNLABELED, STATUS_LABELED_ONE):
                    return task
            return None

    def disagreements(self) -> list[AnnotationTask]:
        with self._lock:
            return [self.tasks[i] for i in self.order if self.tasks[i].status == STATUS_DISAGREED]

    def doubly_labeled(self) -> list[AnnotationTask]:
        return [
            self.tasks[i]
            for i in self.order
            if ROLE_A in self.tasks[i].labels and ROLE_B in self.tasks[i].labels
        ]

    def kappa(self):
        """Agreement over pre-adjudication labels; adjudication never moves it."""
        with self._lock:
            both = self.doubly_labeled()
            if not both:
                raise ValidationError("no task labeled by both annotators yet")
            return cohens_kappa(
                [t.labels[ROLE_A] for t in both], [t.labels[ROLE_B] for t in both]
            )

    def progress(self) -> dict:
        with self._lock:
            counts = {status: 0 for status in STATUSES}
            for task in self.tasks.values():
                counts[task.status] += 1
            return {
                "total": len(self.tasks),
                "by_status": counts,
                "doubly_labeled": len(self.doubly_labeled()),
                "disagreements": counts[STATUS_DISAGREED],
                "terminal": counts[STATUS_LABELED_BOTH] + counts[STATUS_ADJUDICATED],
            }

    def export_gold(self, path: str | Path) -> int:
        """Write the adjudicated gold set; errors while any task is open."""
        with self._lock:
            open_tasks = [
                task_id
                for task_id in self.order
                if self.tasks[task_id].status not in TERMINAL_STATUSES
            ]
            if open_tasks:
                shown = ", ".join(str(t) for t in open_tasks[:10])
                more = "" if len(open_tasks) <= 10 else f" (+{len(open_tasks) - 10} more)"
                raise ValidationError(f"cannot export, open tasks remain: {shown}{more}")
            labels = []
            for task_id in self.order:
                task = self.tasks[task_id]
                source = (
                    "adjudicated" if task.adjudicated_label is not None else ROLE_A
                )
                labels.append(
                    GoldLabel(
                        doc_id=task.doc_id,
                        start=task.start,
                        end=task.end,
                        surface=task.surface,
                        label=task.final_label,
                        source=source,
                    )
                )
            write_gold_labels(labels, path)
            return len(labels)

    # -- event sourcing ------------------------------------------------------

    def replay_from(self, events: Iterable[dict]) -> None:
        """Re-apply persisted events onto fresh tasks (crash recovery).

        The event log is suspended during replay so events are not
        re-appended to disk.
        """
        saved_path = self.events_path
        self.events_path = None
        try:
            for obj in events:
                annotator_id = obj["annotator_id"]
                if obj["role"] == ROLE_ADJUDICATOR:
                    self.adjudicate(obj["task_id"], annotator_id, obj["label"])
                else:
                    self.submit_label(obj["task_id"], annotator_id, obj["label"])
        finally:
            self.events_path = saved_path


def build_session(
    mentions: Iterable[Mention],
    corpus: Corpus,
    guideline: str,
    annotator_a: str = "a",
    annotator_b: str = "b",
    adjudicator: str = "adjudicator",
    events_path: str | Path | None = None,
    shuffle_seed: int | None = None,
) -> tuple[AnnotationSession, int]:
    """One task per unique mention key, in (doc_id, start) order.

    Returns (session, duplicate_count); duplicates collapse with a warning
    count rather than an error. Task context is the containing sentence.
    """
    unique: dict[tuple, Mention] = {}
    duplicates = 0
    for mention in mentions:
        if mention.key in unique:
            duplicates += 1
            continue
        unique[mention.key] = mention
    ordered = sorted(unique.values(), key=lambda m: (m.doc_id, m.start, m.end))
    if shuffle_seed is not None:
        import random

        random.Random(shuffle_seed).shuffle(ordered)
    tasks = []
    for i, mention in enumerate(ordered, start=1):
        doc = corpus.get(mention.doc_id)
        window = extract_window(doc, mention, MODE_SENTENCE)
        tasks.append(
            AnnotationTask(
                task_id=i,
                doc_id=mention.doc_id,
                start=mention.start,
                end=mention.end,
                surface=mention.surface,
                context_text=window.window_text,
                context_start_in_doc=window.window_start,
                highlight_start=window.mention_start_in_window,
                highlight_end=window.mention_end_in_window,
            )
        )
    session = AnnotationSession(
        tasks,
        guideline,
        annotator_a=annotator_a,
        annotator_b=annotator_b,
        adjudicator=adjudicator,
        events_path=events_path,
    )
    return session, duplicates


# --------------------------------------------------------------------------
# HTTP layer
# --------------------------------------------------------------------------


class TaskOut(BaseModel):
    schema_version: int = SCHEMA_VERSION
    task_id: int
    doc_id: str
    start: int
    end: int
    surface: str
    context_text: str
    highlight_start: int
    highlight_end: int
    status: str
    prior_labels: dict[str, str] = {}


class SessionOut(BaseModel):
    schema_version: int = SCHEMA_VERSION
    task_count: int
    guideline: str
    annotators: dict[str, str]
    adjudicator_sees_prior_labels: bool


class LabelIn(BaseModel):
    annotator: str
    label: str


class LabelOut(BaseModel):
    schema_version: int = SCHEMA_VERSION
    task_id: int
    status: str


class DisagreementsOut(BaseModel):
    schema_version: int = SCHEMA_VERSION
    tasks: list[TaskOut]


class KappaOut(BaseModel):
    schema_version: int = SCHEMA_VERSION
    kappa: float
    p_observed: float
    p_expected: float
    item_count: int


class ProgressOut(BaseModel):
    schema_version: int = SCHEMA_VERSION
    total: int
    by_status: dict[str, int]
    doubly_labeled: int
    disagreements: int
    terminal: int


class ExportIn(BaseModel):
    path: Optional[str] = None


class ExportOut(BaseModel):
    schema_version: int = SCHEMA_VERSION
    path: str
    count: int


def _task_out(task: AnnotationTask, include_prior: bool = False) -> TaskOut:
    return TaskOut(
        task_id=task.task_id,
        doc_id=task.doc_id,
        start=task.start,
        end=task.end,
        surface=task.surface,
        context_text=task.context_text,
        highlight_start=task.highlight_start,
        highlight_end=task.highlight_end,
        status=task.status,
        prior_labels=dict(task.labels) if include_prior else {},
    )


def create_app(
    session: AnnotationSession,
    corpus: Corpus | None = None,
    static_dir: str | Path | None = None,
    export_default: str | Path = "gold_export.jsonl",
):
    """FastAPI application over one annotation session."""
    from fastapi import FastAPI, Query, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="rarephen annotation service")

    @app.exception_handler(ValidationError)
    async def validation_handler(request: Request, exc: ValidationError):
        status = 404 if "unknown task" in str(exc) else 400
        return JSONResponse(status_code=status, content={"error": str(exc)})

    @app.exception_handler(ConflictError)
    async def conflict_handler(request: Request, exc: ConflictError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.get("/api/session", response_model=SessionOut)
    def get_session() -> SessionOut:
        return SessionOut(
            task_count=len(session.tasks),
            guideline=session.guideline,
            annotators=dict(session.annotator_ids),
            adjudicator_sees_prior_labels=session.adjudicator_sees_prior_labels,
        )

    @app.get("/api/tasks/next", response_model=Optional[TaskOut])
    def get_next(annotator: str = Query(...)):
        task = session.next_task(annotator)
        if task is None:
            return None
        include_prior = session.role_of(annotator) == ROLE_ADJUDICATOR
        return _task_out(task, include_prior=include_prior)

    @app.get("/api/tasks/{task_id}", response_model=TaskOut)
    def get_task(task_id: int, context: str = Query(MODE_SENTENCE)):
        task = session._task(task_id)
        if context == MODE_FULL and corpus is not None:
            doc = corpus.get(task.doc_id)
            mention = Mention(
                doc_id=task.doc_id,
                start=task.start,
                end=task.end,
                surface=task.surface,
                ordo_id="",
                cui="",
                term_kind="label",
            )
            window = extract_window(doc, mention, MODE_FULL)
            out = _task_out(task, include_prior=True)
            out.context_text = window.window_text
            out.highlight_start = window.mention_start_in_window
            out.highlight_end = window.mention_end_in_window
            return out
        return _task_out(task, include_prior=True)

    @app.post("/api/tasks/{task_id}/label", response_model=LabelOut)
    def post_label(task_id: int, body: LabelIn) -> LabelOut:
        status = session.submit_label(task_id, body.annotator, body.label)
        return LabelOut(task_id=task_id, status=status)

    @app.get("/api/disagreements", response_model=DisagreementsOut)
    def get_disagreements() -> DisagreementsOut:
        return DisagreementsOut(
            tasks=[_task_out(t, include_prior=True) for t in session.disagreements()]
        )

    @app.post("/api/tasks/{task_id}/adjudicate", response_model=LabelOut)
    def post_adjudicate(task_id: int, body: LabelIn) -> LabelOut:
        status = session.adjudicate(task_id, body.annotator, body.label)
        return LabelOut(task_id=task_id, status=status)

    @app.get("/api/kappa", response_model=KappaOut)
    def get_kappa() -> KappaOut:
        result = session.kappa()
        return KappaOut(
            kappa=result.kappa,
            p_observed=result.p_observed,
            p_expected=result.p_expected,
            item_count=result.item_count,
        )

    @app.get("/api/progress", response_model=ProgressOut)
    def get_progress() -> ProgressOut:
        return ProgressOut(**session.progress())

    @app.post("/api/export", response_model=ExportOut)
    def post_export(body: ExportIn | None = None) -> ExportOut:
        path = Path(body.path) if body and body.path else Path(export_default)
        count = session.export_gold(path)
        return ExportOut(path=str(path), count=count)

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
