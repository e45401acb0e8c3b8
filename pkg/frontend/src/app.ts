// Browser glue. Everything stateful lives here: the API client, the
// event stream, and a refresh cycle that re-renders panels from the
// server's view. The page holds no pipeline logic of its own.

import { ApiClient, ApiError } from "./api.js";
import {
  controlsFor,
  focusTaskOf,
  renderBanner,
  renderCandidates,
  renderCommand,
  renderEventTail,
  renderFindings,
  renderMetricsStrip,
  renderTree,
  renderWhatIf,
  whatIfFor,
} from "./render.js";
import { EventStream } from "./stream.js";
import type { GraphView, MetricsView, SessionView, TranscriptEvent } from "./types.js";

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

interface AppState {
  client: ApiClient | null;
  graph: GraphView | null;
  sessionId: string | null;
  view: SessionView | null;
  metrics: MetricsView | null;
  events: TranscriptEvent[];
  stream: EventStream | null;
  streamStatus: string;
  inspected: string | null;
  busy: boolean;
  problem: unknown | null;
}

const state: AppState = {
  client: null,
  graph: null,
  sessionId: null,
  view: null,
  metrics: null,
  events: [],
  stream: null,
  streamStatus: "idle",
  inspected: null,
  busy: false,
  problem: null,
};

function subtasksTotal(): number | null {
  const raw = (el("subtasks-total") as HTMLInputElement).value.trim();
  if (!raw) return null;
  const n = Number(raw);
  return Number.isInteger(n) && n >= 0 ? n : null;
}

function render(): void {
  el("banner").innerHTML = renderBanner(state.problem);
  el("stream-status").textContent = state.streamStatus;
  const view = state.view;
  if (!view) {
    el("session-panel").hidden = true;
    return;
  }
  el("session-panel").hidden = false;
  el("session-title").textContent = `${view.name} [${view.mode}] on ${view.target}`;
  el("metrics-strip").innerHTML = renderMetricsStrip(view, state.metrics);
  el("tree").innerHTML = renderTree(view);
  el("findings").innerHTML = renderFindings(view);
  el("command").innerHTML = renderCommand(view);
  el("candidates").innerHTML = renderCandidates(view);
  el("events").innerHTML = renderEventTail(state.events);

  const inspectTarget = state.inspected ?? view.proposed_selection;
  if (inspectTarget && state.graph) {
    const whatIf = whatIfFor(view, state.graph, inspectTarget);
    el("what-if").innerHTML = whatIf ? renderWhatIf(view, whatIf) : "";
  } else {
    el("what-if").innerHTML = '<p class="empty">pick a candidate to preview it</p>';
  }

  const controls = controlsFor(view.phase);
  const off = state.busy;
  const focus = focusTaskOf(view);
  (el("submit-output") as HTMLButtonElement).disabled = off || !controls.submitOutput;
  (el("classification") as HTMLSelectElement).disabled = off || !controls.submitOutput;
  (el("tool-output") as HTMLTextAreaElement).disabled = off || !controls.submitOutput;
  (el("mark-completed") as HTMLButtonElement).disabled = off || !controls.markStatus || !focus;
  (el("mark-failed") as HTMLButtonElement).disabled = off || !controls.markStatus || !focus;
  (el("keep-working") as HTMLButtonElement).disabled = off || !controls.keepWorking;
  (el("mark-checkpoint") as HTMLButtonElement).disabled = off || !controls.markCheckpoint;
  (el("abort") as HTMLButtonElement).disabled = off || !controls.abort;
  (el("resume") as HTMLButtonElement).disabled = off || !view.pending_resume;
  el("status-note").textContent =
    view.phase === "status-update" && view.recommendation
      ? `recommendation: ${view.recommendation}`
      : "";
}

async function refresh(): Promise<void> {
  if (!state.client || !state.sessionId) return;
  try {
    state.view = await state.client.getSession(state.sessionId);
    if (state.view.outcome) {
      const total = subtasksTotal();
      if (total !== null && state.view.mode === "guided") {
        state.metrics = await state.client.metrics(state.sessionId, total);
      }
    }
    state.problem = null;
  } catch (err) {
    state.problem = err;
  }
  render();
}

async function mutate(action: () => Promise<unknown>): Promise<void> {
  if (state.busy) return;
  state.busy = true;
  render();
  try {
    await action();
    state.problem = null;
  } catch (err) {
    state.problem = err;
  } finally {
    state.busy = false;
  }
  await refresh();
}

function startStream(): void {
  if (!state.client || !state.sessionId) return;
  state.stream?.stop();
  state.events = [];
  const stream = new EventStream(state.client.baseUrl, state.sessionId, { wait: 25 });
  state.stream = stream;
  void stream.run(
    (event) => {
      state.events.push(event);
      void refresh();
    },
    (status) => {
      state.streamStatus = status;
      render();
    },
  );
}

async function connect(): Promise<void> {
  const base = (el("base-url") as HTMLInputElement).value.trim().replace(/\/$/, "");
  state.client = new ApiClient(base);
  try {
    state.graph = await state.client.getGraph();
    const sessions = await state.client.listSessions();
    const picker = el("session-picker") as HTMLSelectElement;
    picker.innerHTML = sessions
      .map(
        (s) =>
          `<option value="${s.id}">${s.id}: ${s.name} [${s.mode}] ${s.outcome ?? s.phase}</option>`,
      )
      .join("");
    state.problem = null;
  } catch (err) {
    state.problem = err;
  }
  render();
}

async function openSession(id: string): Promise<void> {
  state.sessionId = id;
  state.metrics = null;
  state.inspected = null;
  await refresh();
  startStream();
}

async function createSession(): Promise<void> {
  if (!state.client) return;
  const target = (el("new-target") as HTMLInputElement).value.trim();
  const mode = (el("new-mode") as HTMLSelectElement).value as "guided" | "baseline";
  try {
    const view = await state.client.createSession({ target, mode, auto_apply: false });
    state.problem = null;
    await connect();
    await openSession(view.id);
  } catch (err) {
    state.problem = err;
    render();
  }
}

function wire(): void {
  el("connect").addEventListener("click", () => void connect());
  el("open-session").addEventListener("click", () => {
    const id = (el("session-picker") as HTMLSelectElement).value;
    if (id) void openSession(id);
  });
  el("create-session").addEventListener("click", () => void createSession());

  el("submit-output").addEventListener("click", () => {
    const text = (el("tool-output") as HTMLTextAreaElement).value;
    const cls = (el("classification") as HTMLSelectElement).value as
      | "output"
      | "invalid"
      | "success";
    void mutate(async () => {
      await state.client!.submitToolOutput(state.sessionId!, cls, text);
      (el("tool-output") as HTMLTextAreaElement).value = "";
    });
  });
  el("mark-completed").addEventListener("click", () => {
    const focus = state.view ? focusTaskOf(state.view) : null;
    if (!focus) return;
    void mutate(() => state.client!.applyStatus(state.sessionId!, focus, "completed"));
  });
  el("mark-failed").addEventListener("click", () => {
    const focus = state.view ? focusTaskOf(state.view) : null;
    if (!focus) return;
    void mutate(() => state.client!.applyStatus(state.sessionId!, focus, "failed"));
  });
  el("keep-working").addEventListener("click", () => {
    void mutate(() => state.client!.continueCurrent(state.sessionId!));
  });
  el("mark-checkpoint").addEventListener("click", () => {
    const label = (el("checkpoint-label") as HTMLInputElement).value.trim();
    if (!label) return;
    void mutate(() => state.client!.markCheckpoint(state.sessionId!, label));
  });
  el("abort").addEventListener("click", () => {
    void mutate(() => state.client!.abort(state.sessionId!));
  });
  el("resume").addEventListener("click", () => {
    void mutate(() => state.client!.resume(state.sessionId!));
  });

  // candidate clicks inspect; commit happens inside the what-if panel
  el("candidates").addEventListener("click", (ev) => {
    const item = (ev.target as HTMLElement).closest<HTMLElement>("[data-task]");
    if (!item || !item.dataset["task"]) return;
    state.inspected = item.dataset["task"];
    render();
  });
  el("what-if").addEventListener("click", (ev) => {
    const button = (ev.target as HTMLElement).closest<HTMLButtonElement>(
      '[data-action="commit-selection"]',
    );
    if (!button || button.disabled || !button.dataset["task"]) return;
    const chosen = button.dataset["task"];
    void mutate(() => state.client!.applySelection(state.sessionId!, chosen));
  });
  el("command").addEventListener("click", (ev) => {
    const button = (ev.target as HTMLElement).closest<HTMLButtonElement>(
      '[data-action="copy-command"]',
    );
    if (!button || !state.view?.current_command) return;
    void navigator.clipboard.writeText(state.view.current_command);
  });
}

wire();
render();
