/** Shapes of the session-service JSON API consumed by the console. */

export interface ProjectionPoint {
  kernel: number;
  class: number;
  x: number;
  y: number;
}

export interface ProjectionParams {
  perplexity: number;
  iterations: number;
  seed: number;
  final_kl: number;
}

export interface HintEntry {
  kernel: number;
  hint: number;
}

export interface ProjectionPayload {
  layer: number;
  params: ProjectionParams;
  points: ProjectionPoint[];
  hints?: HintEntry[];
}

export interface ScoreRecord {
  layer: number;
  kernel: number;
  criterion: string;
  value: number;
}

export interface ScoresPayload {
  layer: number;
  criterion: string;
  scores: ScoreRecord[];
}

export interface SessionView {
  id: string;
  current_layer: number;
  status: string;
  layer_count: number;
  committed_layers: number[];
  finalized: boolean;
  failure?: string | null;
  config: { method: string; [key: string]: unknown };
}

export interface JobView {
  id: string;
  kind: string;
  session_id: string | null;
  status: "running" | "succeeded" | "failed";
  progress: number;
  epoch: number;
  total_epochs: number;
  message: string;
  error: string | null;
  result: Record<string, unknown> | null;
  trace: number[];
}

export interface LayerRecord {
  layer: number;
  method: string;
  removal: number[];
  kept: number;
  loss_trace: {
    layer: number;
    learning_rate: number;
    initial: number;
    per_epoch: number[];
  } | null;
  checkpoint: string;
}

export interface MetricsReport {
  method: string;
  baseline: { accuracy: number; cohen_kappa: number };
  final: { accuracy: number; cohen_kappa: number };
  kernel_reduction_pct: number;
  gflops_reduction_pct: number;
}

export type DecisionState = "keep" | "remove" | "undecided";
