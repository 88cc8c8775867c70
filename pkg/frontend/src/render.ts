/** Pure HTML renderers. Every verdict, confidence, weight, and count shown
 * here is copied byte-for-byte (or number-for-number) from the API payload;
 * the console computes nothing about the decision itself. */

import { computeHighlights } from "./highlight.js";
import type { QueueEntry, TraceDoc } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Disclosure level 0: the one-line verdict, exactly the payload summary. */
export function renderSummaryLine(entry: QueueEntry): string {
  return escapeHtml(entry.explanation.Summary);
}

export function renderSummaryRow(entry: QueueEntry): string {
  return (
    `<li class="queue-row" data-trace="${escapeHtml(entry.trace_id)}">` +
    `<span class="subreddit">${escapeHtml(entry.subreddit)}</span>` +
    `<span class="summary">${renderSummaryLine(entry)}</span>` +
    `</li>`
  );
}

/** Disclosure level 1: the two key points, verbatim. */
export function renderKeyPoints(entry: QueueEntry): string {
  const items = entry.explanation["Key Points"]
    .map((point) => `<li class="key-point">${escapeHtml(point)}</li>`)
    .join("");
  return `<ul class="key-points">${items}</ul>`;
}

/** Disclosure level 2: the raw trace with votes, weights, and highlighted
 * salient spans. Spans that are not exact substrings get a warning badge. */
export function renderTraceView(entry: QueueEntry, trace: TraceDoc): string {
  const spans = entry.explanation.Trace["Salient Spans"];
  const { segments, missing } = computeHighlights(entry.comment, spans);
  const commentHtml = segments
    .map((segment) =>
      segment.highlighted
        ? `<mark>${escapeHtml(segment.text)}</mark>`
        : escapeHtml(segment.text),
    )
    .join("");
  const voteRows = trace.trace.votes
    .map((vote, i) => {
      const weight = trace.trace.selection.weights[i];
      const voteLabel = vote.status === "ok" ? String(vote.vote) : vote.status;
      const confidence = vote.confidence === null ? "-" : String(vote.confidence);
      return (
        `<tr><td>${escapeHtml(vote.expert[1])}</td>` +
        `<td>${weight === undefined ? "-" : String(weight)}</td>` +
        `<td>${escapeHtml(voteLabel)}</td>` +
        `<td>${escapeHtml(confidence)}</td></tr>`
      );
    })
    .join("");
  const warning = missing.length
    ? `<p class="badge-warning">unmatched spans: ${missing.map(escapeHtml).join(", ")}</p>`
    : "";
  return (
    `<div class="trace-view">` +
    `<p class="decision">Decision: ${escapeHtml(entry.explanation.Trace.Decision)}</p>` +
    `<p class="confidence">Confidence: ${String(entry.explanation.Trace.Confidence)}</p>` +
    `<p class="comment">${commentHtml}</p>` +
    warning +
    `<table class="votes"><thead><tr><th>expert</th><th>weight</th><th>vote</th>` +
    `<th>confidence</th></tr></thead><tbody>${voteRows}</tbody></table>` +
    `</div>`
  );
}

export function renderEmptyQueue(): string {
  return `<p class="empty-state">No pending reviews. The queue is clear.</p>`;
}

export function renderErrorBanner(message: string): string {
  return `<div class="error-banner" role="alert">${escapeHtml(message)}</div>`;
}
