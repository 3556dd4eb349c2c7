/**
 * Typed client for the gateway API, plus the long-poll follow loop with
 * resumable sequence numbers and backoff on transient failures.
 */

import { applyEvents, isTerminal, type EpisodeView } from "./timeline.js";
import type { ContextEntryMetaWire, EpisodeEventWire, RetrievedContextWire } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class GatewayClient {
  constructor(
    private baseUrl = "",
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  async submitQuery(text: string): Promise<string> {
    const body = await this.post<{ episode_id: string }>("/api/queries", { text });
    return body.episode_id;
  }

  async fetchEvents(episodeId: string, since: number): Promise<EpisodeEventWire[]> {
    const body = await this.get<{ events: EpisodeEventWire[] }>(
      `/api/episodes/${encodeURIComponent(episodeId)}/events?since=${since}`,
    );
    return body.events;
  }

  async preview(query: string, method: string): Promise<RetrievedContextWire> {
    const params = new URLSearchParams({ q: query, method });
    return this.get<RetrievedContextWire>(`/api/retrieval/preview?${params}`);
  }

  async addOrientation(roomId: string, text: string): Promise<string> {
    const body = await this.post<{ entry_id: string }>("/api/orientation", {
      room_id: roomId,
      text,
    });
    return body.entry_id;
  }

  async listContexts(level = "", category = ""): Promise<ContextEntryMetaWire[]> {
    const params = new URLSearchParams();
    if (level) params.set("level", level);
    if (category) params.set("category", category);
    const suffix = params.size ? `?${params}` : "";
    const body = await this.get<{ entries: ContextEntryMetaWire[] }>(`/api/contexts${suffix}`);
    return body.entries;
  }
}

export interface FollowOptions {
  pollDelayMs?: number;
  maxConsecutiveErrors?: number;
  onUpdate?: (view: EpisodeView) => void;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

/**
 * Long-poll an episode until a terminal event arrives, folding each batch
 * into the view. Resumes from `view.sinceSeq`, so a refreshed page (or a
 * retried poll) never renders an event twice. Transient fetch failures
 * back off and retry up to `maxConsecutiveErrors` times.
 */
export async function followEpisode(
  client: GatewayClient,
  view: EpisodeView,
  options: FollowOptions = {},
): Promise<EpisodeView> {
  const pollDelay = options.pollDelayMs ?? 150;
  const maxErrors = options.maxConsecutiveErrors ?? 5;
  let errors = 0;
  while (!isTerminal(view)) {
    try {
      const events = await client.fetchEvents(view.episodeId, view.sinceSeq);
      errors = 0;
      if (events.length > 0) {
        view = applyEvents(view, events);
        options.onUpdate?.(view);
      } else {
        await sleep(pollDelay);
      }
    } catch (error) {
      errors += 1;
      if (error instanceof ApiError && error.status === 404) throw error;
      if (errors >= maxErrors) throw error;
      await sleep(pollDelay * 2 ** errors);
    }
  }
  return view;
}
