/**
 * Pure HTML-string renderers for the console panels. Keeping these free of
 * DOM access lets the tests assert on rendered markup directly.
 */

import type { EpisodeView, TimelineCard } from "./timeline.js";
import type { ContextEntryMetaWire, RetrievedContextWire } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function cardHtml(card: TimelineCard): string {
  const detail = card.detail
    ? `<pre class="card-detail">${escapeHtml(card.detail)}</pre>`
    : "";
  return (
    `<div class="card card-${card.kind}" data-seq="${card.seq}">` +
    `<span class="card-seq">#${card.seq}</span>` +
    `<span class="card-title">${escapeHtml(card.title)}</span>` +
    detail +
    `</div>`
  );
}

export function renderTimeline(view: EpisodeView): string {
  if (view.cards.length === 0) {
    return `<p class="empty">Waiting for events…</p>`;
  }
  return view.cards.map(cardHtml).join("\n");
}

export function renderBanner(view: EpisodeView): string {
  switch (view.status) {
    case "running":
      return `<div class="banner banner-running">Episode ${escapeHtml(view.episodeId)} running…</div>`;
    case "completed":
      return (
        `<div class="banner banner-completed">Completed` +
        `<pre>${escapeHtml(view.finalAnswer ?? "")}</pre></div>`
      );
    case "refused":
      return (
        `<div class="banner banner-refused">Refused: ${escapeHtml(view.refusalReason ?? "")}` +
        ` <span class="cited">cited: ${view.citedEntryIds.map(escapeHtml).join(", ")}</span></div>`
      );
    case "errored":
      return `<div class="banner banner-errored">Episode errored; see the timeline for details.</div>`;
  }
}

export function renderErrorBanner(message: string): string {
  return `<div class="banner banner-errored dismissible">${escapeHtml(message)}</div>`;
}

export function renderContextPanel(context: RetrievedContextWire | null): string {
  if (!context || context.items.length === 0) {
    return `<p class="empty">No retrieved context.</p>`;
  }
  const byLevel = new Map<string, typeof context.items>();
  for (const item of context.items) {
    const bucket = byLevel.get(item.level) ?? [];
    bucket.push(item);
    byLevel.set(item.level, bucket);
  }
  const groups: string[] = [];
  for (const level of ["L1", "L2", "L3"]) {
    const items = byLevel.get(level);
    if (!items) continue;
    const rows = items
      .map((item) => {
        const why =
          item.score !== null
            ? `score ${item.score.toFixed(4)}`
            : escapeHtml(item.reason ?? "");
        return (
          `<li class="ctx-item"><code>${escapeHtml(item.entry_id)}</code>` +
          ` <span class="ctx-why">${why}</span>` +
          ` <span class="ctx-words">${item.included_words}w</span></li>`
        );
      })
      .join("");
    groups.push(`<div class="ctx-group"><h4>${level}</h4><ul>${rows}</ul></div>`);
  }
  const meta =
    `<p class="ctx-meta">${escapeHtml(context.method)} · ` +
    `${context.total_words}/${context.budget} words</p>`;
  return meta + groups.join("");
}

export function renderContextsTable(entries: ContextEntryMetaWire[]): string {
  if (entries.length === 0) return `<p class="empty">No entries.</p>`;
  const rows = entries
    .map(
      (e) =>
        `<tr><td><code>${escapeHtml(e.id)}</code></td><td>${escapeHtml(e.level)}</td>` +
        `<td>${escapeHtml(e.category)}</td><td>${escapeHtml(e.title)}</td>` +
        `<td>${escapeHtml(e.summary)}</td></tr>`,
    )
    .join("");
  return (
    `<table class="contexts"><thead><tr><th>id</th><th>level</th><th>category</th>` +
    `<th>title</th><th>summary</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}
