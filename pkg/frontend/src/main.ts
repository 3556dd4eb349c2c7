/** Browser wiring: forms, the follow loop, and panel updates. */

import { followEpisode, GatewayClient } from "./api.js";
import { renderBanner, renderContextPanel, renderContextsTable, renderErrorBanner, renderTimeline } from "./render.js";
import { newEpisodeView, type EpisodeView } from "./timeline.js";

const client = new GatewayClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showError(target: HTMLElement, message: string): void {
  target.insertAdjacentHTML("afterbegin", renderErrorBanner(message));
  const banner = target.querySelector(".dismissible");
  banner?.addEventListener("click", () => banner.remove());
}

function paint(view: EpisodeView): void {
  el("banner").innerHTML = renderBanner(view);
  el("timeline").innerHTML = renderTimeline(view);
  el("episode-context").innerHTML = renderContextPanel(view.context);
}

let following = false;

async function submitAndFollow(): Promise<void> {
  if (following) return;
  const input = el<HTMLTextAreaElement>("query-input");
  const text = input.value.trim();
  if (!text) return;
  following = true;
  el<HTMLButtonElement>("query-submit").disabled = true;
  try {
    const episodeId = await client.submitQuery(text);
    let view = newEpisodeView(episodeId, text);
    paint(view);
    view = await followEpisode(client, view, { pollDelayMs: 250, onUpdate: paint });
    paint(view);
  } catch (error) {
    showError(el("banner"), String(error));
  } finally {
    following = false;
    el<HTMLButtonElement>("query-submit").disabled = false;
  }
}

async function previewContext(): Promise<void> {
  const query = el<HTMLInputElement>("preview-query").value.trim();
  const method = el<HTMLSelectElement>("preview-method").value;
  if (!query) return;
  try {
    const context = await client.preview(query, method);
    el("preview-result").innerHTML = renderContextPanel(context);
  } catch (error) {
    showError(el("preview-result"), String(error));
  }
}

async function addOrientation(): Promise<void> {
  const room = el<HTMLInputElement>("orientation-room").value.trim();
  const text = el<HTMLTextAreaElement>("orientation-text").value.trim();
  const status = el("orientation-status");
  if (!room) {
    status.innerHTML = renderErrorBanner("room id is required");
    return;
  }
  if (!text) {
    status.innerHTML = renderErrorBanner("orientation text is required");
    return;
  }
  try {
    const entryId = await client.addOrientation(room, text);
    status.innerHTML = `<div class="banner banner-completed">stored as <code>${entryId}</code></div>`;
    el<HTMLTextAreaElement>("orientation-text").value = "";
  } catch (error) {
    status.innerHTML = renderErrorBanner(String(error));
  }
}

async function refreshContexts(): Promise<void> {
  try {
    const entries = await client.listContexts();
    el("contexts-table").innerHTML = renderContextsTable(entries);
  } catch (error) {
    showError(el("contexts-table"), String(error));
  }
}

function wirePreviewButtonState(): void {
  const query = el<HTMLInputElement>("preview-query");
  const button = el<HTMLButtonElement>("preview-submit");
  const update = () => {
    button.disabled = query.value.trim() === "";
  };
  query.addEventListener("input", update);
  update();
}

document.addEventListener("DOMContentLoaded", () => {
  el("query-submit").addEventListener("click", () => void submitAndFollow());
  el("preview-submit").addEventListener("click", () => void previewContext());
  el("orientation-submit").addEventListener("click", () => void addOrientation());
  el("contexts-refresh").addEventListener("click", () => void refreshContexts());
  wirePreviewButtonState();
  void refreshContexts();
});
