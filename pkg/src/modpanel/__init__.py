"""modpanel: an ensemble content-moderation engine.

A panel of specialized experts votes on each comment; an allocator weighs
them, a top-K aggregator combines the votes, and every decision leaves a
replayable trace with a moderator-facing explanation.
"""

from .aggregation import (
    AggregateDecision,
    TopKSelection,
    dot_product_aggregate,
    majority_vote_aggregate,
    pipeline_confidence,
    top_k,
)
from .allocation import (
    AllocationVector,
    GroupIndex,
    build_group_index,
    classification_allocate,
    cosine_similarity,
    similarity_allocate,
    softmax,
)
from .core import (
    NORM_THEMES,
    SOURCE_SUBREDDITS,
    AggregationMethod,
    AllocationStrategy,
    EngineError,
    ExpertId,
    ExpertKind,
    ModerationItem,
    PipelineConfig,
    QuorumPolicy,
    TraceId,
    snapshot_config,
    trace_id,
    validate_item,
)
from .evaluation import (
    ConfusionCounts,
    EvalReport,
    SplitSpec,
    auc,
    confusion,
    macro_f1,
    micro_f1,
    positive_f1,
    pr_tradeoff_report,
    run_eval,
    welch_t_test,
)
from .experts import (
    ExpertDescriptor,
    ExpertRegistry,
    ExpertVote,
    VoteStatus,
    builtin_lexicon_expert,
    fan_out_predict,
)
from .explanation import (
    DecisionTrace,
    ExplanationDoc,
    build_trace,
    derive_recommendation,
    explain_llm,
    explain_template,
    render_prompt,
    validate_explanation,
)
from .gateway import EngineConfig, ModerationEngine, create_app, load_config

__version__ = "0.1.0"
