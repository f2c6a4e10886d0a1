// Wire types for the annotation service. These mirror the server's JSON
// bodies exactly; the client never derives or recomputes any of the numeric
// fields, it only displays them.

export type SessionStatus = "idle" | "awaiting_annotations" | "training";

export interface SessionDescriptor {
  id: string;
  dataset: string;
  strategy: string;
  round: number;
  labeled: number;
  unlabeled: number;
  status: SessionStatus;
  config: Record<string, unknown>;
  error?: string;
}

/** One served triplet: anchor i, candidates j and k, plus display payloads. */
export interface BatchItem {
  triplet_id: number;
  i: number;
  j: number;
  k: number;
  payloads: { i: number[]; j: number[]; k: number[] };
  labels?: { i: string; j: string; k: string };
  images?: { i: string; j: string; k: string };
}

export interface BatchPayload {
  round: number;
  items: BatchItem[];
}

export type Closer = "j" | "k";

export interface AnnotationSubmission {
  session?: string;
  round: number;
  answers: { triplet_id: number; closer: Closer }[];
}

export interface SubmitReply {
  accepted: number;
  remaining: number;
  status: SessionStatus;
}

export interface RoundRecord {
  round: number;
  strategy: string;
  chosen_ids: number[];
  batch_entropy: number | null;
  accuracy: number;
  select_ms: number;
  train_ms: number;
}

export interface MetricsPayload {
  records: RoundRecord[];
  status: SessionStatus;
  round: number;
  error?: string;
}
