"""Local scorers the adapter can serve: a deterministic keyword-logistic
scorer, a tiny trainable perceptron over hashed bags of words, and the
matching logit/embedding models for the allocator side.

These are reference implementations of the wire contracts; heavyweight
model bindings follow the same shapes but are not vendored here.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

# scorer(context, comment, rules_or_norm) -> (vote, confidence in [0, 1])
Scorer = Callable[[str | None, str, str], tuple[bool, float]]


@dataclass(frozen=True)
class ScorerBinding:
    """One scorer plus the expert identity it answers for."""

    scorer: Scorer
    name: str
    kind: str = "norm_violation"


def _logistic(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def keyword_scorer(keywords: Mapping[str, float], threshold: float = 0.5) -> Scorer:
    """Vote remove iff the summed weight of keywords present in the comment
    reaches the threshold; confidence is the logistic of the margin."""
    patterns = {
        kw: re.compile(rf"\b{re.escape(kw)}\b", re.IGNORECASE) for kw in keywords
    }

    def score(context: str | None, comment: str, rules_or_norm: str) -> tuple[bool, float]:
        total = sum(w for kw, w in keywords.items() if patterns[kw].search(comment))
        margin = total - threshold
        return margin >= 0.0, _logistic(margin)

    return score


def _hashed_tokens(text: str, dimension: int) -> list[float]:
    vec = [0.0] * dimension
    for token in text.lower().split():
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        idx = int.from_bytes(digest[:4], "big") % dimension
        vec[idx] += 1.0 if digest[4] % 2 == 0 else -1.0
    return vec


@dataclass
class TrainablePerceptronScorer:
    """A minimal trainable scorer over hashed bag-of-words features, so
    integration tests can exercise a 'real' fitted model without downloads."""

    dimension: int = 64
    learning_rate: float = 0.5
    epochs: int = 10
    weights: list[float] = field(default_factory=list)
    bias: float = 0.0

    def fit(self, samples: Sequence[tuple[str, bool]]) -> "TrainablePerceptronScorer":
        self.weights = [0.0] * self.dimension
        for _ in range(self.epochs):
            for text, label in samples:
                features = _hashed_tokens(text, self.dimension)
                activation = sum(w * x for w, x in zip(self.weights, features)) + self.bias
                predicted = activation >= 0.0
                if predicted != label:
                    sign = 1.0 if label else -1.0
                    for i, x in enumerate(features):
                        self.weights[i] += self.learning_rate * sign * x
                    self.bias += self.learning_rate * sign
        return self

    def __call__(self, context: str | None, comment: str, rules_or_norm: str) -> tuple[bool, float]:
        features = _hashed_tokens(comment, self.dimension)
        activation = sum(w * x for w, x in zip(self.weights, features)) + self.bias
        return activation >= 0.0, _logistic(activation)


def trigger_logit_model(
    triggers: Mapping[str, str], expert_order: Sequence[str]
) -> Callable[[str | None, str], tuple[list[str], list[float]]]:
    """Logits = occurrence counts of each expert's trigger token over the
    concatenated context and comment, emitted in the declared order."""
    order = list(expert_order)
    patterns = {
        name: re.compile(rf"\b{re.escape(trigger)}\b", re.IGNORECASE)
        for name, trigger in triggers.items()
    }

    def logits(context: str | None, comment: str) -> tuple[list[str], list[float]]:
        text = f"{context}\n\n{comment}" if context else comment
        return order, [float(len(patterns[name].findall(text))) for name in order]

    return logits


def hashed_embedding_model(dimension: int = 64) -> Callable[[str], list[float]]:
    """Signed feature hashing onto a unit vector, the offline-reference
    embedding shared with the engine's fixtures."""

    def embed(text: str) -> list[float]:
        vec = _hashed_tokens(text, dimension)
        norm = math.sqrt(sum(v * v for v in vec))
        if norm == 0.0:
            vec[0] = 1.0
            norm = 1.0
        return [v / norm for v in vec]

    return embed
