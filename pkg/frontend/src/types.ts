// Shapes returned by the session service. The dashboard never computes
// pipeline state itself; these are read as-is and rendered.

export type Phase =
  | "initialization"
  | "command-generation"
  | "awaiting-tool-output"
  | "summarization"
  | "status-update"
  | "selection"
  | "terminated";

export type Outcome = "succeeded" | "failed" | "exhausted" | "aborted";

export type TaskStatus = "to-do" | "in-progress" | "completed" | "failed";

export type Classification = "output" | "invalid" | "success";

export interface TaskView {
  name: string;
  status: TaskStatus;
  findings: string[];
  invalid_commands: number;
}

export interface CandidateView {
  id: string;
  name: string;
  description: string;
}

export interface CheckpointView {
  label: string;
  index: number;
}

export interface ConfigView {
  max_invalid_commands: number;
  repetition_window: number;
  auto_select_single: boolean;
}

export interface SessionView {
  id: string;
  name: string;
  mode: "guided" | "baseline";
  target: string;
  phase: Phase;
  outcome: Outcome | null;
  termination_reason: string | null;
  current_command: string | null;
  proposed_selection: string | null;
  recommendation: string | null;
  queries_sent: number;
  events: number;
  pending_resume: boolean;
  checkpoints: CheckpointView[];
  config: ConfigView;
  tasks: Record<string, TaskView> | null;
  selection_path: string[] | null;
  candidates: CandidateView[] | null;
  tree: string | null;
  plan_revision: number | null;
}

export interface SessionSummary {
  id: string;
  name: string;
  mode: string;
  target: string;
  phase: Phase;
  outcome: Outcome | null;
}

export interface GraphTaskView {
  id: string;
  name: string;
  tactic: string;
  description: string;
  next: string[];
}

export interface GraphView {
  initial_task: string;
  content_hash: string;
  tasks: GraphTaskView[];
}

export interface MetricsView {
  name: string;
  mode: string;
  subtasks_completed: number;
  subtasks_total: number;
  queries_total: number;
  queries_to_deepest_subtask: number;
  avg_queries_per_completed_subtask: number | null;
  outcome: string | null;
}

export interface TranscriptEvent {
  seq: number;
  kind: string;
  payload: Record<string, unknown>;
  at: string;
}
