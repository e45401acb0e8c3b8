// Pure view functions: data in, HTML string out. No DOM access, no
// service calls, so every panel is testable in node. app.ts owns the
// wiring that puts these strings into the page.

import { ApiError } from "./api.js";
import type {
  CandidateView,
  GraphView,
  MetricsView,
  Phase,
  SessionView,
  TranscriptEvent,
} from "./types.js";

const ESCAPES: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => ESCAPES[ch] as string);
}

/**
 * Which controls are enabled is a function of the phase alone; the
 * in-flight flag in app.ts only layers a temporary "everything off" on
 * top while a mutation is round-tripping.
 */
export interface Controls {
  submitOutput: boolean;
  markStatus: boolean;
  keepWorking: boolean;
  commitSelection: boolean;
  markCheckpoint: boolean;
  abort: boolean;
}

export function controlsFor(phase: Phase): Controls {
  return {
    submitOutput: phase === "awaiting-tool-output",
    markStatus: phase === "awaiting-tool-output" || phase === "status-update",
    keepWorking: phase === "status-update",
    commitSelection: phase === "selection",
    markCheckpoint: phase !== "terminated",
    abort: phase !== "terminated",
  };
}

/** Id of the single in-progress task, if any. */
export function focusTaskOf(view: SessionView): string | null {
  if (!view.tasks) return null;
  for (const [taskId, task] of Object.entries(view.tasks)) {
    if (task.status === "in-progress") return taskId;
  }
  return null;
}

const STATUS_SUFFIX = /\((to-do|in-progress|completed|failed)\)\s*$/;

/** Indented list mirroring the server's numbered tree snapshot. */
export function renderTree(view: SessionView): string {
  if (view.tree === null) {
    return '<p class="empty">baseline session: no task tree, the model keeps its own plan</p>';
  }
  const items = view.tree.split("\n").map((line) => {
    const match = line.match(STATUS_SUFFIX);
    const cls = match ? `status-${match[1]}` : "finding";
    const depth = Math.floor((line.length - line.trimStart().length) / 4);
    return `<li class="${cls} depth-${depth}">${escapeHtml(line.trim())}</li>`;
  });
  return `<ul class="tree">${items.join("")}</ul>`;
}

export function renderFindings(view: SessionView): string {
  if (view.tasks === null) return '<p class="empty">no findings panel in baseline mode</p>';
  const sections: string[] = [];
  for (const [taskId, task] of Object.entries(view.tasks)) {
    if (task.findings.length === 0) continue;
    const bullets = task.findings
      .map((finding) => `<li>${escapeHtml(finding)}</li>`)
      .join("");
    sections.push(
      `<section class="findings-task"><h4>${escapeHtml(taskId)} ${escapeHtml(task.name)}</h4>` +
        `<ul>${bullets}</ul></section>`,
    );
  }
  if (sections.length === 0) return '<p class="empty">no findings yet</p>';
  return sections.join("");
}

export function renderCommand(view: SessionView): string {
  if (!view.current_command) return '<p class="empty">no command proposed yet</p>';
  // copy-only on purpose: the dashboard never executes anything
  return (
    `<pre class="command">${escapeHtml(view.current_command)}</pre>` +
    `<button data-action="copy-command">copy</button>`
  );
}

export interface WhatIf {
  id: string;
  name: string;
  description: string;
  nextNames: string[];
  isCandidate: boolean;
}

/** Read-only graph lookup previewing where a task would lead. */
export function whatIfFor(view: SessionView, graph: GraphView, taskId: string): WhatIf | null {
  const task = graph.tasks.find((t) => t.id === taskId);
  if (!task) return null;
  const byId = new Map(graph.tasks.map((t) => [t.id, t]));
  const candidates = view.candidates ?? [];
  return {
    id: task.id,
    name: task.name,
    description: task.description,
    nextNames: task.next.map((id) => {
      const next = byId.get(id);
      return next ? `${next.id} ${next.name}` : id;
    }),
    isCandidate: candidates.some((candidate: CandidateView) => candidate.id === taskId),
  };
}

export function renderWhatIf(view: SessionView, whatIf: WhatIf): string {
  const commitAllowed = whatIf.isCandidate && view.phase === "selection";
  const nextList =
    whatIf.nextNames.length === 0
      ? '<p class="empty">a dead end: no tasks follow</p>'
      : `<ul>${whatIf.nextNames.map((n) => `<li>${escapeHtml(n)}</li>`).join("")}</ul>`;
  let explanation = "";
  if (!whatIf.isCandidate) {
    explanation = `<p class="why-disabled">${escapeHtml(whatIf.id)} is not a candidate of the current anchor</p>`;
  } else if (view.phase !== "selection") {
    explanation = '<p class="why-disabled">selection is not open in this phase</p>';
  }
  return (
    `<h4>${escapeHtml(whatIf.id)} ${escapeHtml(whatIf.name)}</h4>` +
    `<p>${escapeHtml(whatIf.description)}</p>` +
    `<h5>would open up</h5>${nextList}` +
    `<button data-action="commit-selection" data-task="${escapeHtml(whatIf.id)}"` +
    `${commitAllowed ? "" : " disabled"}>commit</button>` +
    explanation
  );
}

export function renderCandidates(view: SessionView): string {
  const candidates = view.candidates ?? [];
  if (candidates.length === 0) return '<p class="empty">no candidates right now</p>';
  const items = candidates.map((candidate) => {
    const proposed = candidate.id === view.proposed_selection;
    return (
      `<li class="candidate${proposed ? " proposed" : ""}" data-task="${escapeHtml(candidate.id)}">` +
      `<strong>${escapeHtml(candidate.id)}</strong> ${escapeHtml(candidate.name)}` +
      `${proposed ? ' <span class="tag">proposed</span>' : ""}` +
      `<p>${escapeHtml(candidate.description)}</p></li>`
    );
  });
  return `<ul class="candidates">${items.join("")}</ul>`;
}

export function renderMetricsStrip(view: SessionView, metrics: MetricsView | null): string {
  const parts = [
    `<span>queries <strong>${view.queries_sent}</strong></span>`,
    `<span>milestones <strong>${view.checkpoints.length}</strong></span>`,
    `<span>phase <strong>${escapeHtml(view.phase)}</strong></span>`,
  ];
  if (view.outcome) {
    parts.push(`<span class="outcome-${view.outcome}">outcome <strong>${view.outcome}</strong></span>`);
  }
  if (metrics) {
    parts.push(
      `<span>subtasks <strong>${metrics.subtasks_completed}/${metrics.subtasks_total}</strong></span>`,
    );
    if (metrics.avg_queries_per_completed_subtask !== null) {
      parts.push(
        `<span>avg queries/subtask <strong>${metrics.avg_queries_per_completed_subtask.toFixed(2)}</strong></span>`,
      );
    }
  }
  return parts.join(" ");
}

function describeEvent(event: TranscriptEvent): string {
  const payload = event.payload;
  switch (event.kind) {
    case "PromptSent":
      return `prompt ${String(payload["template"] ?? "")}`;
    case "ResponseReceived":
      return "response";
    case "ToolOutputSubmitted":
      return `tool output (${String(payload["classification"] ?? "")})`;
    case "StatusChanged":
      return `${String(payload["task"] ?? "")} → ${String(payload["to"] ?? "")}`;
    case "SelectionCommitted":
      return `selected ${String(payload["chosen"] ?? "")}${payload["forced"] ? " (forced)" : ""}`;
    case "InvalidCommandRecorded":
      return `invalid command #${String(payload["count"] ?? "")}`;
    case "CheckpointMarked":
      return `milestone: ${String(payload["label"] ?? "")}`;
    case "SessionTerminated":
      return `terminated: ${String(payload["outcome"] ?? "")}`;
    default:
      return event.kind;
  }
}

export function renderEventTail(events: TranscriptEvent[], limit = 12): string {
  if (events.length === 0) return '<p class="empty">no events yet</p>';
  const tail = events.slice(-limit);
  const items = tail.map(
    (event) =>
      `<li data-seq="${event.seq}"><span class="seq">#${event.seq}</span> ` +
      `<span class="kind">${escapeHtml(event.kind)}</span> ` +
      `${escapeHtml(describeEvent(event))}</li>`,
  );
  return `<ol class="event-tail">${items.join("")}</ol>`;
}

export function renderBanner(problem: unknown | null): string {
  if (problem === null) return "";
  if (problem instanceof ApiError) {
    const label = problem.status === 0 ? "connection error" : `error ${problem.status}`;
    return `<div class="banner error">${escapeHtml(label)}: ${escapeHtml(problem.message)}</div>`;
  }
  return `<div class="banner error">${escapeHtml(String(problem))}</div>`;
}
