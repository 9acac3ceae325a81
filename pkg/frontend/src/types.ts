/** Wire shapes shared with the acquisition service. Field names match
 * the JSON exactly, so these are snake_case on purpose. */

export type Phase = "baseline" | "sampling";

export interface LiveFrame {
  seq: number;
  t_ms: number;
  /** dequantized channel potentials, millivolts */
  mv: [number, number, number];
}

/** One server-push message; seq is strictly increasing per stream. */
export interface LiveStreamMessage {
  record_id: string;
  frame: LiveFrame;
  phase: Phase;
}

export type AcquisitionState =
  | "baseline"
  | "sampling"
  | "awaiting_result"
  | "complete"
  | "stopped"
  | "failed";

export interface AcquisitionSnapshot {
  acquisition_id: string;
  record_id: string;
  scenario: string;
  state: AcquisitionState;
  n_frames: number;
  result: ClassificationResult | null;
  error: string | null;
}

export interface SimilarityEntry {
  record_id: string;
  label: string;
  /** fraction of trees routing this record with the query, 0..1 */
  proximity: number;
}

export interface ClassificationResult {
  model_id: string;
  record_id: string;
  top_class: string;
  confidence: number;
  likelihoods: Record<string, number>;
  similarities: SimilarityEntry[];
  latency_ms: number;
}

export interface ScenarioInfo {
  pack: string;
  name: string;
  label: string;
  baseline_s: number;
  sample_s: number;
  replicates: number;
}

export interface ModelInfo {
  model_id: string;
  status: "training" | "ready" | "failed";
  classes: string[];
  n_records: number;
  n_features: number;
}
