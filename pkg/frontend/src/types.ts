/** Wire shapes of the gateway /v1 API, mirrored verbatim. The console adds
 * presentation state only; it never derives or recomputes decision data. */

export interface ExplanationJson {
  Summary: string;
  "Key Points": string[];
  Trace: {
    Decision: string;
    Confidence: number;
    "Salient Spans": string[];
  };
}

export interface QueueEntry {
  trace_id: string;
  status: "pending" | "resolved_keep" | "resolved_remove";
  enqueued_at: number;
  resolver: string | null;
  note: string | null;
  resolved_at: number | null;
  subreddit: string;
  comment: string;
  explanation: ExplanationJson;
}

export interface TraceVote {
  expert: [string, string];
  vote: boolean | null;
  confidence: number | null;
  latency: number;
  status: string;
  spans: string[];
}

export interface TraceDoc {
  trace: {
    trace_id: string;
    item: {
      item_id: string;
      subreddit: string;
      context: string | null;
      comment: string;
      label: boolean | null;
      norm_violation: string | null;
    };
    selection: {
      experts: [string, string][];
      weights: number[];
      original_weights: number[];
    };
    votes: TraceVote[];
    decision: {
      decision: boolean;
      score: number;
      method: string;
      votes_for: number;
      votes_against: number;
      tie_broken: boolean;
    };
    confidence: number;
    created_at: number;
  };
  recommendation: string;
}

export interface PipelineConfigDoc {
  allocation_strategy: string;
  aggregation_method: string;
  k: number;
  temperature: number;
  decision_threshold: number;
  consensus_high_fraction: number;
  quorum_policy: string;
  min_quorum: number;
  renormalize_top_k: boolean;
}

export interface ModerateResponse {
  trace_id: string;
  recommendation: string;
  consensus: string;
  decision: boolean;
  confidence: number;
  explanation: ExplanationJson;
  degraded_explainer: boolean;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  field?: string;
}
