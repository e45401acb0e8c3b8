import type {
  Classification,
  GraphView,
  MetricsView,
  SessionSummary,
  SessionView,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly slug: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface CreateSessionRequest {
  target: string;
  mode?: "guided" | "baseline";
  name?: string;
  auto_apply?: boolean;
  config?: {
    max_invalid_commands?: number;
    repetition_window?: number;
    auto_select_single?: boolean;
    history_turn_budget?: number | null;
  };
}

/** Typed wrapper over the session service. One instance per base URL. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, "unreachable", `cannot reach ${this.baseUrl}: ${err}`);
    }
    if (!response.ok) {
      let slug = "http-error";
      let message = `HTTP ${response.status}`;
      try {
        const data = (await response.json()) as { error?: string; message?: string };
        if (data.error) slug = data.error;
        if (data.message) message = data.message;
      } catch {
        // non-JSON error body, keep the generic message
      }
      throw new ApiError(response.status, slug, message);
    }
    return (await response.json()) as T;
  }

  getGraph(): Promise<GraphView> {
    return this.request("GET", "/graph");
  }

  listSessions(): Promise<SessionSummary[]> {
    return this.request("GET", "/sessions");
  }

  createSession(body: CreateSessionRequest): Promise<SessionView> {
    return this.request("POST", "/sessions", body);
  }

  getSession(id: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${id}`);
  }

  submitToolOutput(id: string, classification: Classification, text: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${id}/tool-output`, { classification, text });
  }

  applyStatus(id: string, task: string, to: "completed" | "failed"): Promise<SessionView> {
    return this.request("POST", `/sessions/${id}/status`, { task, to });
  }

  applySelection(id: string, task: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${id}/selection`, { task });
  }

  continueCurrent(id: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${id}/continue`);
  }

  abort(id: string, reason = "operator abort"): Promise<SessionView> {
    return this.request("POST", `/sessions/${id}/abort`, { reason });
  }

  markCheckpoint(id: string, label: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${id}/checkpoint`, { label });
  }

  resume(id: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${id}/resume`);
  }

  metrics(id: string, subtasksTotal: number): Promise<MetricsView> {
    return this.request("GET", `/sessions/${id}/metrics?subtasks_total=${subtasksTotal}`);
  }
}
