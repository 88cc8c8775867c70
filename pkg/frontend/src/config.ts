/** Pipeline config panel: read the live snapshot, patch knobs, and show the
 * gateway's validation errors verbatim. */

import { ApiError, type GatewayClient } from "./api.js";
import type { PipelineConfigDoc } from "./types.js";

export const K_CHOICES = [1, 3, 5, 7] as const;
export const STRATEGY_CHOICES = ["classification", "similarity"] as const;
export const AGGREGATION_CHOICES = ["dot_product", "majority_vote"] as const;

export interface FieldError {
  field?: string;
  message: string;
}

export class ConfigPanel {
  config: PipelineConfigDoc | null = null;
  error: FieldError | null = null;

  constructor(private readonly client: GatewayClient) {}

  async load(): Promise<PipelineConfigDoc> {
    this.config = await this.client.config();
    this.error = null;
    return this.config;
  }

  private async refetch(): Promise<void> {
    try {
      this.config = await this.client.config();
    } catch {
      // keep the stale snapshot; the patch error is already surfaced
    }
  }

  /** PATCH a partial change; on rejection the gateway's error message is
   * kept for field-level display and the live snapshot is refetched (so a
   * concurrent change by another operator wins). */
  async apply(changes: Partial<PipelineConfigDoc>): Promise<PipelineConfigDoc | null> {
    try {
      this.config = await this.client.patchConfig(changes);
      this.error = null;
      return this.config;
    } catch (error) {
      if (error instanceof ApiError) {
        this.error = { field: error.field, message: error.message };
        await this.refetch();
        return null;
      }
      throw error;
    }
  }

  setK(k: number): Promise<PipelineConfigDoc | null> {
    return this.apply({ k });
  }

  setStrategy(strategy: string): Promise<PipelineConfigDoc | null> {
    return this.apply({ allocation_strategy: strategy });
  }

  setAggregation(method: string): Promise<PipelineConfigDoc | null> {
    return this.apply({ aggregation_method: method });
  }

  setConsensusFraction(fraction: number): Promise<PipelineConfigDoc | null> {
    return this.apply({ consensus_high_fraction: fraction });
  }
}
