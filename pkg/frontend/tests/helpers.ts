/** Tiny fetch stub: route table plus a recorded call log. */

export interface RecordedCall {
  method: string;
  path: string;
  body: string | null;
}

export type RouteHandler = (call: RecordedCall) => { status?: number; json: unknown };

export class FakeServer {
  calls: RecordedCall[] = [];
  private routes = new Map<string, RouteHandler>();

  route(method: string, path: string, handler: RouteHandler | unknown): void {
    const wrapped: RouteHandler =
      typeof handler === "function" ? (handler as RouteHandler) : () => ({ json: handler });
    this.routes.set(`${method} ${path}`, wrapped);
  }

  install(): void {
    globalThis.fetch = (async (input: RequestInfo | URL, init?: RequestInit) => {
      const url = typeof input === "string" ? input : input.toString();
      const path = url.replace(/^https?:\/\/[^/]+/, "");
      const method = init?.method ?? "GET";
      const call: RecordedCall = {
        method,
        path,
        body: typeof init?.body === "string" ? init.body : null,
      };
      this.calls.push(call);
      const handler = this.routes.get(`${method} ${path}`);
      if (!handler) {
        return new Response(JSON.stringify({ error: `no route ${method} ${path}` }), {
          status: 404,
          headers: { "Content-Type": "application/json" },
        });
      }
      const result = handler(call);
      return new Response(JSON.stringify(result.json), {
        status: result.status ?? 200,
        headers: { "Content-Type": "application/json" },
      });
    }) as typeof fetch;
  }
}

export function makeTask(overrides: Partial<Record<string, unknown>> = {}) {
  const context = "The patient was seen. Findings include markerdisease today. Plan follows.";
  const start = context.indexOf("markerdisease");
  return {
    schema_version: 1,
    task_id: 1,
    doc_id: "doc0",
    start: 40,
    end: 53,
    surface: "markerdisease",
    context_text: context,
    highlight_start: start,
    highlight_end: start + "markerdisease".length,
    status: "unlabeled",
    prior_labels: {},
    ...overrides,
  };
}
