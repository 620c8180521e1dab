/**
 * Entry point: annotator identity prompt, hash routing between the three
 * screens, and the guideline panel.
 */

import { AnnotationApi } from "./api.js";
import { AdjudicationScreen, DashboardScreen, TaskScreen } from "./screens.js";

type Route = "task" | "adjudicate" | "dashboard";

function currentRoute(): Route {
  const hash = window.location.hash.replace("#", "");
  if (hash === "adjudicate" || hash === "dashboard") return hash;
  return "task";
}

export async function start(root: HTMLElement, api = new AnnotationApi()): Promise<void> {
  let annotator = window.sessionStorage.getItem("annotator-id") ?? "";
  if (!annotator) {
    annotator = window.prompt("Annotator id (e.g. a, b, adjudicator):", "a") ?? "a";
    window.sessionStorage.setItem("annotator-id", annotator);
  }

  const session = await api.session();

  const header = document.createElement("header");
  const title = document.createElement("h1");
  title.textContent = `Rare-disease mention review (${session.task_count} tasks)`;
  header.appendChild(title);
  const nav = document.createElement("nav");
  for (const [label, route] of [
    ["Label", "task"],
    ["Adjudicate", "adjudicate"],
    ["Dashboard", "dashboard"],
  ] as const) {
    const link = document.createElement("a");
    link.href = `#${route}`;
    link.textContent = label;
    nav.appendChild(link);
  }
  const who = document.createElement("span");
  who.className = "annotator-id";
  who.textContent = `signed in as ${annotator}`;
  nav.appendChild(who);
  header.appendChild(nav);
  root.appendChild(header);

  const guideline = document.createElement("details");
  guideline.className = "guideline";
  const summary = document.createElement("summary");
  summary.textContent = "Annotation guideline";
  const body = document.createElement("pre");
  body.textContent = session.guideline;
  guideline.append(summary, body);
  root.appendChild(guideline);

  const screenRoot = document.createElement("main");
  root.appendChild(screenRoot);

  let active: { detach?: () => void } | null = null;

  const show = (route: Route) => {
    active?.detach?.();
    screenRoot.replaceChildren();
    if (route === "task") {
      const screen = new TaskScreen(api, annotator, screenRoot);
      screen.attach();
      active = screen;
    } else if (route === "adjudicate") {
      const screen = new AdjudicationScreen(api, annotator, screenRoot);
      void screen.load();
      active = screen;
    } else {
      const screen = new DashboardScreen(api, screenRoot);
      screen.attach();
      active = screen;
    }
  };

  window.addEventListener("hashchange", () => show(currentRoute()));
  show(currentRoute());
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void start(document.getElementById("app") as HTMLElement);
}
