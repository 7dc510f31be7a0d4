/** Wire types mirroring the session service JSON API. */

export type Label = "positive" | "negative";
export type PhaseName = "slider" | "querying" | "converged";

export interface BatchEntry {
  cluster_id: number;
  score: number;
  predicted: Label;
  zone: "near+" | "far+" | "near-" | "far-" | "slider";
  crop: string; // base64 PNG
}

export interface Batch {
  round: number;
  phase: PhaseName;
  entries: BatchEntry[];
}

export interface CreateSessionResponse {
  session_id: string;
  n_clusters: number;
  slider: Batch;
  b_min: number;
  b_max: number;
}

export interface Detection {
  x: number;
  y: number;
  score: number;
  label: Label;
}

export interface SessionResult {
  count: number;
  detections: Detection[];
  converged: boolean;
  round: number;
  phase: PhaseName;
}

export interface LabelsResponse {
  converged: boolean;
  round: number;
  corrections: number[];
}

export interface BiasRequest {
  b: number;
}

export interface LabelsRequest {
  labels: Record<string, Label>;
}

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}
