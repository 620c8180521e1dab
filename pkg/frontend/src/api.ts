/**
 * Typed client for the annotation service HTTP API.
 *
 * The client never derives statistics itself: every displayed figure comes
 * straight from a server response. Label submissions from any input path
 * (button or keyboard) funnel through the same body builder, so the POST
 * payloads are identical by construction.
 */

export type Label = "true_mention" | "false_mention";

export interface SessionOut {
  schema_version: number;
  task_count: number;
  guideline: string;
  annotators: Record<string, string>;
  adjudicator_sees_prior_labels: boolean;
}

export interface TaskOut {
  schema_version: number;
  task_id: number;
  doc_id: string;
  start: number;
  end: number;
  surface: string;
  context_text: string;
  highlight_start: number;
  highlight_end: number;
  status: string;
  prior_labels: Record<string, string>;
}

export interface LabelOut {
  schema_version: number;
  task_id: number;
  status: string;
}

export interface KappaOut {
  schema_version: number;
  kappa: number;
  p_observed: number;
  p_expected: number;
  item_count: number;
}

export interface ProgressOut {
  schema_version: number;
  total: number;
  by_status: Record<string, number>;
  doubly_labeled: number;
  disagreements: number;
  terminal: number;
}

export interface ExportOut {
  schema_version: number;
  path: string;
  count: number;
}

/** Error carrying the HTTP status so callers can branch on conflicts. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

export function labelBody(annotator: string, label: Label): string {
  return JSON.stringify({ annotator, label });
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { error?: string };
      if (body && body.error) detail = body.error;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class AnnotationApi {
  constructor(private readonly base: string = "") {}

  private url(path: string): string {
    return this.base + path;
  }

  async session(): Promise<SessionOut> {
    return parseOrThrow(await fetch(this.url("/api/session")));
  }

  /** Next open task for the annotator, or null when their queue is done. */
  async nextTask(annotator: string): Promise<TaskOut | null> {
    const response = await fetch(
      this.url(`/api/tasks/next?annotator=${encodeURIComponent(annotator)}`),
    );
    return parseOrThrow<TaskOut | null>(response);
  }

  /** Refetch one task, optionally with full-document context. */
  async task(taskId: number, context: "sentence" | "full" = "sentence"): Promise<TaskOut> {
    const response = await fetch(this.url(`/api/tasks/${taskId}?context=${context}`));
    return parseOrThrow(response);
  }

  async submitLabel(taskId: number, annotator: string, label: Label): Promise<LabelOut> {
    const response = await fetch(this.url(`/api/tasks/${taskId}/label`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: labelBody(annotator, label),
    });
    return parseOrThrow(response);
  }

  async disagreements(): Promise<TaskOut[]> {
    const body = await parseOrThrow<{ tasks: TaskOut[] }>(
      await fetch(this.url("/api/disagreements")),
    );
    return body.tasks;
  }

  async adjudicate(taskId: number, annotator: string, label: Label): Promise<LabelOut> {
    const response = await fetch(this.url(`/api/tasks/${taskId}/adjudicate`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: labelBody(annotator, label),
    });
    return parseOrThrow(response);
  }

  /** Live kappa, or null while the server reports insufficient data. */
  async kappa(): Promise<KappaOut | null> {
    const response = await fetch(this.url("/api/kappa"));
    if (response.status === 400) return null;
    return parseOrThrow(response);
  }

  async progress(): Promise<ProgressOut> {
    return parseOrThrow(await fetch(this.url("/api/progress")));
  }

  async exportGold(): Promise<ExportOut> {
    const response = await fetch(this.url("/api/export"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({}),
    });
    return parseOrThrow(response);
  }
}
