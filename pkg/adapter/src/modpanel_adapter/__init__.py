"""Reference adapter: local scorers behind the moderation engine's expert
and allocator wire protocols."""

from .scorers import (
    ScorerBinding,
    TrainablePerceptronScorer,
    hashed_embedding_model,
    keyword_scorer,
    trigger_logit_model,
)
from .server import create_allocator_app, create_expert_app, serve_allocator, serve_expert

__version__ = "0.1.0"
