/** Browser bootstrap: wires the queue screen and config panel to the DOM.
 * All logic lives in the testable modules; this file only binds events. */

import { GatewayClient, apiBase } from "./api.js";
import { ConfigPanel, K_CHOICES } from "./config.js";
import { QueueScreen } from "./queue.js";
import {
  renderEmptyQueue,
  renderErrorBanner,
  renderKeyPoints,
  renderSummaryRow,
  renderTraceView,
} from "./render.js";

const client = new GatewayClient(apiBase());
const queue = new QueueScreen(client);
const panel = new ConfigPanel(client);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function drawQueue(): Promise<void> {
  await queue.load();
  const banner = el<HTMLDivElement>("banner");
  banner.innerHTML = queue.lastError ? renderErrorBanner(queue.lastError) : "";
  const list = el<HTMLUListElement>("queue");
  if (queue.entries.length === 0) {
    list.innerHTML = renderEmptyQueue();
    return;
  }
  list.innerHTML = queue.entries.map(renderSummaryRow).join("");
  for (const row of Array.from(list.querySelectorAll<HTMLLIElement>(".queue-row"))) {
    const traceId = row.dataset.trace ?? "";
    row.addEventListener("click", async () => {
      const entry = queue.entries.find((e) => e.trace_id === traceId);
      if (!entry) return;
      const level = await queue.expand(traceId);
      const detail = document.createElement("div");
      detail.className = "detail";
      if (level >= 1) detail.innerHTML += renderKeyPoints(entry);
      if (level === 2) {
        const trace = queue.traces.get(traceId);
        if (trace) detail.innerHTML += renderTraceView(entry, trace);
        detail.innerHTML +=
          `<button data-action="keep">resolve: keep</button>` +
          `<button data-action="remove">resolve: remove</button>`;
      }
      row.querySelector(".detail")?.remove();
      row.appendChild(detail);
      for (const button of Array.from(detail.querySelectorAll("button"))) {
        button.addEventListener("click", async (event) => {
          event.stopPropagation();
          const action = (event.target as HTMLButtonElement).dataset.action as
            | "keep"
            | "remove";
          try {
            await queue.resolve(traceId, action, "console-operator");
          } catch (error) {
            el<HTMLDivElement>("banner").innerHTML = renderErrorBanner(
              error instanceof Error ? error.message : String(error),
            );
          }
          await drawQueue();
        });
      }
    });
  }
}

async function drawConfig(): Promise<void> {
  const config = await panel.load();
  const knobs = el<HTMLDivElement>("config");
  knobs.innerHTML =
    `<label>K <select id="k-select">${K_CHOICES.map(
      (k) => `<option value="${k}" ${k === config.k ? "selected" : ""}>${k}</option>`,
    ).join("")}</select></label>` +
    `<span id="config-error" class="field-error"></span>`;
  el<HTMLSelectElement>("k-select").addEventListener("change", async (event) => {
    const k = Number((event.target as HTMLSelectElement).value);
    await panel.setK(k);
    el<HTMLSpanElement>("config-error").textContent = panel.error
      ? `${panel.error.field ?? ""}: ${panel.error.message}`
      : "";
  });
}

window.addEventListener("focus", () => void drawQueue()); // refetch-on-focus
void drawQueue();
void drawConfig();
