/** Review-queue screen state: pending entries, per-row disclosure level,
 * and optimistic resolution with rollback on failure. */

import type { GatewayClient } from "./api.js";
import type { QueueEntry, TraceDoc } from "./types.js";

export type DisclosureLevel = 0 | 1 | 2;

export class QueueScreen {
  entries: QueueEntry[] = [];
  disclosure = new Map<string, DisclosureLevel>();
  traces = new Map<string, TraceDoc>();
  lastError: string | null = null;

  constructor(private readonly client: GatewayClient) {}

  async load(): Promise<void> {
    try {
      this.entries = await this.client.queue("pending");
      this.lastError = null;
    } catch (error) {
      // Non-blocking: keep stale rows, surface a banner.
      this.lastError = error instanceof Error ? error.message : String(error);
    }
  }

  level(traceId: string): DisclosureLevel {
    return this.disclosure.get(traceId) ?? 0;
  }

  /** Each expansion reveals one more level: summary -> key points -> trace.
   * The full trace is fetched on first need and cached. */
  async expand(traceId: string): Promise<DisclosureLevel> {
    const next = Math.min(2, this.level(traceId) + 1) as DisclosureLevel;
    if (next === 2 && !this.traces.has(traceId)) {
      this.traces.set(traceId, await this.client.trace(traceId));
    }
    this.disclosure.set(traceId, next);
    return next;
  }

  collapse(traceId: string): void {
    this.disclosure.set(traceId, 0);
  }

  /** Optimistically drop the row, restoring it in place if the call fails. */
  async resolve(
    traceId: string,
    action: "keep" | "remove",
    resolver: string,
    note?: string,
  ): Promise<void> {
    const index = this.entries.findIndex((e) => e.trace_id === traceId);
    if (index < 0) {
      throw new Error(`no pending entry for trace ${traceId}`);
    }
    const removed = this.entries[index] as QueueEntry;
    this.entries = this.entries.filter((e) => e.trace_id !== traceId);
    try {
      await this.client.resolve(traceId, action, resolver, note);
    } catch (error) {
      this.entries = [
        ...this.entries.slice(0, index),
        removed,
        ...this.entries.slice(index),
      ];
      throw error;
    }
  }
}
