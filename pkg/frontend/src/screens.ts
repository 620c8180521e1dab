/**
 * The three screens: labeling, adjudication queue, and the live dashboard.
 *
 * Screens hold no state beyond the annotator id and the task currently on
 * screen; every committed fact lives on the server and is refetched, so a
 * page reload can never lose work.
 */

import { AnnotationApi, ApiError, Label, TaskOut } from "./api.js";
import { renderHighlighted } from "./highlight.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

const LABEL_TEXT: Record<Label, string> = {
  true_mention: "yes - true mention",
  false_mention: "no - not a true mention",
};

export class TaskScreen {
  private current: TaskOut | null = null;
  private fullContext = false;
  private keyHandler = (event: KeyboardEvent) => this.onKey(event);

  constructor(
    private readonly api: AnnotationApi,
    private readonly annotator: string,
    private readonly root: HTMLElement,
  ) {}

  attach(): void {
    document.addEventListener("keydown", this.keyHandler);
    void this.load();
  }

  detach(): void {
    document.removeEventListener("keydown", this.keyHandler);
  }

  private onKey(event: KeyboardEvent): void {
    if (event.key === "y") void this.submit("true_mention");
    else if (event.key === "n") void this.submit("false_mention");
    else if (event.key === "f") void this.toggleContext();
  }

  async load(): Promise<void> {
    this.current = await this.api.nextTask(this.annotator);
    this.fullContext = false;
    this.render();
  }

  /** Both the buttons and the y/n keys land here with the same arguments. */
  async submit(label: Label): Promise<void> {
    if (!this.current) return;
    const taskId = this.current.task_id;
    try {
      await this.api.submitLabel(taskId, this.annotator, label);
    } catch (error) {
      if (error instanceof ApiError && error.isConflict) {
        await this.load();
        this.notice(`Task ${taskId} was updated elsewhere; refetching.`);
        return;
      }
      throw error;
    }
    await this.load();
  }

  async toggleContext(): Promise<void> {
    if (!this.current) return;
    this.fullContext = !this.fullContext;
    this.current = await this.api.task(
      this.current.task_id,
      this.fullContext ? "full" : "sentence",
    );
    this.render();
  }

  private notice(message: string): void {
    const banner = el("div", "notice", message);
    this.root.prepend(banner);
    setTimeout(() => banner.remove(), 4000);
  }

  render(): void {
    this.root.replaceChildren();
    if (!this.current) {
      this.root.appendChild(el("h2", "done", "Queue complete"));
      this.root.appendChild(
        el("p", undefined, "All of your tasks are labeled. See the dashboard for progress."),
      );
      return;
    }
    const task = this.current;
    this.root.appendChild(el("h2", undefined, `Task ${task.task_id}`));
    this.root.appendChild(el("p", "surface", `Mention: ${task.surface}`));

    const context = el("blockquote", "context");
    renderHighlighted(context, task.context_text, task.highlight_start, task.highlight_end);
    this.root.appendChild(context);

    const controls = el("div", "controls");
    const yes = el("button", "yes", LABEL_TEXT.true_mention);
    yes.dataset.shortcut = "y";
    yes.addEventListener("click", () => void this.submit("true_mention"));
    const no = el("button", "no", LABEL_TEXT.false_mention);
    no.dataset.shortcut = "n";
    no.addEventListener("click", () => void this.submit("false_mention"));
    const toggle = el(
      "button",
      "toggle",
      this.fullContext ? "Show sentence" : "Show full document",
    );
    toggle.addEventListener("click", () => void this.toggleContext());
    controls.append(yes, no, toggle);
    this.root.appendChild(controls);
    this.root.appendChild(
      el("p", "hint", "Shortcuts: y = yes, n = no, f = toggle full document"),
    );
  }
}

export class AdjudicationScreen {
  private queue: TaskOut[] = [];

  constructor(
    private readonly api: AnnotationApi,
    private readonly adjudicator: string,
    private readonly root: HTMLElement,
  ) {}

  detach(): void {}

  async load(): Promise<void> {
    this.queue = await this.api.disagreements();
    this.render();
  }

  async decide(taskId: number, label: Label): Promise<void> {
    try {
      await this.api.adjudicate(taskId, this.adjudicator, label);
    } catch (error) {
      if (!(error instanceof ApiError && error.isConflict)) throw error;
      // already adjudicated elsewhere; the reload below reflects it
    }
    await this.load();
  }

  render(): void {
    this.root.replaceChildren();
    this.root.appendChild(el("h2", undefined, "Disagreements"));
    if (this.queue.length === 0) {
      this.root.appendChild(el("p", "empty-queue", "No disagreements waiting."));
      return;
    }
    for (const task of this.queue) {
      const card = el("div", "disagreement");
      card.appendChild(el("h3", undefined, `Task ${task.task_id}: ${task.surface}`));
      const context = el("blockquote", "context");
      renderHighlighted(context, task.context_text, task.highlight_start, task.highlight_end);
      card.appendChild(context);
      const labels = el("p", "prior-labels");
      labels.textContent = Object.entries(task.prior_labels)
        .map(([who, what]) => `${who}: ${what}`)
        .join("  |  ");
      card.appendChild(labels);
      const controls = el("div", "controls");
      const yes = el("button", "yes", LABEL_TEXT.true_mention);
      yes.addEventListener("click", () => void this.decide(task.task_id, "true_mention"));
      const no = el("button", "no", LABEL_TEXT.false_mention);
      no.addEventListener("click", () => void this.decide(task.task_id, "false_mention"));
      controls.append(yes, no);
      card.appendChild(controls);
      this.root.appendChild(card);
    }
  }
}

export const POLL_INTERVAL_MS = 2000;

export class DashboardScreen {
  private timer: ReturnType<typeof setInterval> | null = null;
  private stale = false;

  constructor(
    private readonly api: AnnotationApi,
    private readonly root: HTMLElement,
  ) {}

  attach(): void {
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), POLL_INTERVAL_MS);
  }

  detach(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  async refresh(): Promise<void> {
    try {
      const [progress, kappa] = await Promise.all([this.api.progress(), this.api.kappa()]);
      this.stale = false;
      this.render(progress, kappa);
    } catch {
      this.stale = true;
      this.renderStaleBanner();
    }
  }

  private renderStaleBanner(): void {
    if (!this.root.querySelector(".stale-banner")) {
      this.root.prepend(
        el("div", "stale-banner", "Server unreachable - showing stale data"),
      );
    }
  }

  render(
    progress: import("./api.js").ProgressOut,
    kappa: import("./api.js").KappaOut | null,
  ): void {
    this.root.replaceChildren();
    if (this.stale) this.renderStaleBanner();
    this.root.appendChild(el("h2", undefined, "Session dashboard"));

    const list = el("dl", "progress");
    const row = (name: string, value: string, cls?: string) => {
      list.appendChild(el("dt", undefined, name));
      list.appendChild(el("dd", cls, value));
    };
    row("Total tasks", String(progress.total));
    for (const [status, count] of Object.entries(progress.by_status)) {
      row(status, String(count), `status-${status}`);
    }
    row("Doubly labeled", String(progress.doubly_labeled), "doubly-labeled");
    row("Disagreements", String(progress.disagreements), "disagreements");
    row(
      "Cohen's kappa",
      kappa === null ? "insufficient data" : kappa.kappa.toFixed(2),
      "kappa",
    );
    this.root.appendChild(list);

    const bar = el("progress") as HTMLProgressElement;
    bar.max = progress.total;
    bar.value = progress.terminal;
    this.root.appendChild(bar);

    const exportButton = el("button", "export", "Export gold labels");
    exportButton.disabled = progress.terminal !== progress.total;
    exportButton.addEventListener("click", () => {
      void this.api.exportGold().then((out) => {
        this.root.appendChild(
          el("p", "export-result", `Exported ${out.count} labels to ${out.path}`),
        );
      });
    });
    this.root.appendChild(exportButton);
  }
}
