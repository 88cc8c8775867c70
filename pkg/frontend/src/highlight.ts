/** Salient-span highlighting: exact substring offsets computed client-side.
 * Spans that do not occur verbatim in the comment are reported back for a
 * warning badge instead of being force-highlighted. */

export interface Segment {
  text: string;
  highlighted: boolean;
}

export interface HighlightResult {
  segments: Segment[];
  missing: string[];
}

export function computeHighlights(comment: string, spans: string[]): HighlightResult {
  const intervals: Array<[number, number]> = [];
  const missing: string[] = [];
  for (const span of spans) {
    if (!span) continue;
    const start = comment.indexOf(span);
    if (start < 0) {
      missing.push(span);
    } else {
      intervals.push([start, start + span.length]);
    }
  }
  intervals.sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  const merged: Array<[number, number]> = [];
  for (const [start, end] of intervals) {
    const last = merged[merged.length - 1];
    if (last && start <= last[1]) {
      last[1] = Math.max(last[1], end);
    } else {
      merged.push([start, end]);
    }
  }
  const segments: Segment[] = [];
  let cursor = 0;
  for (const [start, end] of merged) {
    if (start > cursor) {
      segments.push({ text: comment.slice(cursor, start), highlighted: false });
    }
    segments.push({ text: comment.slice(start, end), highlighted: true });
    cursor = end;
  }
  if (cursor < comment.length) {
    segments.push({ text: comment.slice(cursor), highlighted: false });
  }
  if (segments.length === 0 && comment.length > 0) {
    segments.push({ text: comment, highlighted: false });
  }
  return { segments, missing };
}
