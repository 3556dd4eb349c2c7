/**
 * Episode view model: an ordered, deduplicated timeline built from wire
 * events. Applying the same events twice (or refetching from seq 0 after a
 * refresh) reconstructs an identical view, because deduplication keys on
 * the gapless per-episode sequence numbers.
 */

import type {
  EpisodeEventWire,
  EventKind,
  FeedbackWire,
  RetrievedContextWire,
  TaskWire,
} from "./types.js";

export type StatusBadge = "running" | "completed" | "refused" | "errored";

export interface TimelineCard {
  seq: number;
  kind: EventKind;
  title: string;
  detail: string;
  ts: string;
}

export interface EpisodeView {
  episodeId: string;
  query: string;
  sinceSeq: number;
  status: StatusBadge;
  cards: TimelineCard[];
  context: RetrievedContextWire | null;
  finalAnswer: string | null;
  refusalReason: string | null;
  citedEntryIds: string[];
}

export function newEpisodeView(episodeId: string, query = ""): EpisodeView {
  return {
    episodeId,
    query,
    sinceSeq: 0,
    status: "running",
    cards: [],
    context: null,
    finalAnswer: null,
    refusalReason: null,
    citedEntryIds: [],
  };
}

const TERMINAL_KINDS: ReadonlySet<string> = new Set(["completed", "refused", "errored"]);

export function isTerminal(view: EpisodeView): boolean {
  return view.status !== "running";
}

function taskLine(task: TaskWire): string {
  const third = task.kind === "INSPECT" ? task.mode ?? "" : task.message ?? "";
  return [task.kind, task.target, third].filter((part) => part).join(" · ");
}

function cardFor(event: EpisodeEventWire): TimelineCard {
  const payload = event.payload;
  let title: string = event.kind;
  let detail = "";
  switch (event.kind) {
    case "retrieved": {
      const ctx = payload as unknown as RetrievedContextWire;
      title = `retrieved ${ctx.items.length} entries (${ctx.method})`;
      detail = `${ctx.total_words}/${ctx.budget} words: ${ctx.items.map((i) => i.entry_id).join(", ")}`;
      break;
    }
    case "planned":
    case "replanned": {
      const tasks = (payload.tasks ?? []) as TaskWire[];
      title = `${event.kind}: ${tasks.length} task${tasks.length === 1 ? "" : "s"}`;
      detail = tasks.map((t, i) => `${i + 1}. ${taskLine(t)}`).join("\n");
      break;
    }
    case "dispatched": {
      const task = payload.task as TaskWire;
      title = `dispatched ${task.kind}`;
      detail = taskLine(task);
      break;
    }
    case "feedback": {
      const fb = payload as unknown as FeedbackWire;
      title = `feedback: ${fb.task.kind} ${fb.status}`;
      detail = fb.observation;
      break;
    }
    case "refused": {
      title = "query refused";
      detail = String(payload.reason ?? "");
      break;
    }
    case "completed": {
      title = "episode completed";
      detail = String(payload.final_answer ?? "");
      break;
    }
    case "errored": {
      title = "episode errored";
      detail = [payload.error, payload.detail].filter(Boolean).join(": ");
      break;
    }
  }
  return { seq: event.seq, kind: event.kind, title, detail, ts: event.ts };
}

/**
 * Fold a batch of wire events into the view. Events at or below the
 * current sequence are duplicates and are dropped; the rest apply in
 * sequence order.
 */
export function applyEvents(view: EpisodeView, events: EpisodeEventWire[]): EpisodeView {
  const fresh = [...events]
    .sort((a, b) => a.seq - b.seq)
    .filter((e, idx, arr) => e.seq > view.sinceSeq && (idx === 0 || arr[idx - 1]!.seq !== e.seq));
  if (fresh.length === 0) {
    return view;
  }
  const next: EpisodeView = {
    ...view,
    cards: [...view.cards],
    citedEntryIds: [...view.citedEntryIds],
  };
  for (const event of fresh) {
    next.cards.push(cardFor(event));
    next.sinceSeq = event.seq;
    if (event.kind === "retrieved") {
      next.context = event.payload as unknown as RetrievedContextWire;
    } else if (event.kind === "refused") {
      next.status = "refused";
      next.refusalReason = String(event.payload.reason ?? "");
      next.citedEntryIds = (event.payload.cited_entry_ids ?? []) as string[];
    } else if (event.kind === "completed") {
      next.status = "completed";
      next.finalAnswer = String(event.payload.final_answer ?? "");
    } else if (event.kind === "errored") {
      next.status = "errored";
    }
  }
  return next;
}

/** Sequence numbers of the rendered cards; gapless when nothing was missed. */
export function cardSeqs(view: EpisodeView): number[] {
  return view.cards.map((c) => c.seq);
}

export function hasGaps(view: EpisodeView): boolean {
  return cardSeqs(view).some((seq, idx) => seq !== idx + 1);
}

export { TERMINAL_KINDS };
