/**
 * Wire types for the gateway API. Every rendered value comes from these
 * payloads; the console fabricates nothing client-side.
 */

export type EventKind =
  | "retrieved"
  | "planned"
  | "refused"
  | "dispatched"
  | "feedback"
  | "replanned"
  | "completed"
  | "errored";

export interface EpisodeEventWire {
  episode_id: string;
  seq: number;
  kind: EventKind;
  payload: Record<string, unknown>;
  ts: string;
}

export interface TaskWire {
  kind: string;
  target: string;
  mode: string | null;
  message: string | null;
  justification: string;
}

export interface RetrievedItemWire {
  entry_id: string;
  level: string;
  score: number | null;
  reason: string | null;
  included_words: number;
}

export interface RetrievalTraceWire {
  query_digest: string;
  l2_ranking: [string, number][];
  l3_candidates: string[];
  l3_chosen: string | null;
  l1_catalog: string[];
  l1_selected: string[];
  truncations: string[];
  warnings: string[];
}

export interface RetrievedContextWire {
  method: string;
  budget: number;
  total_words: number;
  items: RetrievedItemWire[];
  trace?: RetrievalTraceWire;
}

export interface FeedbackWire {
  task: TaskWire;
  status: "succeeded" | "failed";
  observation: string;
}

export interface ContextEntryMetaWire {
  id: string;
  level: string;
  category: string;
  title: string;
  summary: string;
  word_count: number;
  refs: string[];
}
