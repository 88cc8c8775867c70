"""Expert allocation: temperature softmax over classifier logits, and
averaged-cosine similarity against per-group centroids.

The averaged similarity uses the mean-of-unit-vectors centroid, which is
algebraically identical to averaging the individual cosines but O(1) per
query: mean_i cos(t, e_i) = unit(t) . mean_i unit(e_i).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np
import requests

from .core import EmptyInput, EngineError, ExpertId, ModerationItem, PipelineConfig

logger = logging.getLogger(__name__)

# Sum-to-one tolerance for every weight vector this module produces.
WEIGHT_SUM_TOL = 1e-9


class NonFiniteInput(EngineError):
    code = "non_finite_input"


class ZeroNorm(EngineError):
    code = "zero_norm"


class DimensionMismatch(EngineError):
    code = "dimension_mismatch"


class EmptyGroup(EngineError):
    code = "empty_group"


class BackendUnavailable(EngineError):
    code = "backend_unavailable"


class LogitCountMismatch(EngineError):
    code = "logit_count_mismatch"


class MissingGroup(EngineError):
    code = "missing_group"


@dataclass(frozen=True)
class AllocationVector:
    """Per-expert nonnegative weights summing to one, in registry order."""

    experts: tuple[ExpertId, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.experts) != len(self.weights):
            raise DimensionMismatch("experts and weights must have equal length")
        if any(w < 0 for w in self.weights):
            raise EngineError("allocation weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > WEIGHT_SUM_TOL:
            raise EngineError("allocation weights must sum to 1")


def softmax(scores: Sequence[float], temperature: float) -> list[float]:
    """Temperature softmax with max-shift for numerical stability.

    Output entries are strictly positive and sum to one within 1e-9; the
    argmax of the input is preserved for every temperature > 0. The top
    entry only reaches 1.0 when the score gap exceeds float64 resolution.
    """
    if len(scores) == 0:
        raise EmptyInput("softmax requires at least one score")
    if not (math.isfinite(temperature) and temperature > 0):
        raise NonFiniteInput("temperature must be finite and > 0", field="temperature")
    arr = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("scores must all be finite")
    shifted = (arr - arr.max()) / temperature
    # Floor at the smallest normal float so entries stay strictly positive
    # even when a score sits hundreds of units below the max.
    exps = np.maximum(np.exp(shifted), np.finfo(np.float64).tiny)
    out = exps / exps.sum()
    return [float(v) for v in out]


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1] against
    floating-point drift."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise DimensionMismatch(f"vector dimensions differ: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroNorm("cosine similarity undefined for zero-norm vectors")
    value = float(va @ vb) / (na * nb)
    return max(-1.0, min(1.0, value))


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ZeroNorm("cannot normalize a zero vector")
    return vec / norm


@dataclass(frozen=True)
class GroupIndex:
    """Per-expert mean-of-unit-vectors centroids over the source corpus."""

    groups: tuple[ExpertId, ...]
    centroids: tuple[tuple[float, ...], ...]
    member_counts: tuple[int, ...]

    @property
    def dimension(self) -> int:
        return len(self.centroids[0])

    def centroid_for(self, expert: ExpertId) -> np.ndarray:
        for gid, centroid in zip(self.groups, self.centroids):
            if gid == expert:
                return np.asarray(centroid, dtype=np.float64)
        raise MissingGroup(f"no centroid for expert {expert}")

    def mean_similarity(self, expert: ExpertId, query: Sequence[float]) -> float:
        """Average cosine between the query and every member of the group,
        computed via the centroid identity."""
        q = _unit(np.asarray(query, dtype=np.float64))
        centroid = self.centroid_for(expert)
        if q.shape != centroid.shape:
            raise DimensionMismatch(
                f"query dimension {q.shape[0]} != index dimension {centroid.shape[0]}"
            )
        return float(q @ centroid)


def build_group_index(corpus: Iterable[tuple[ExpertId, Sequence[float]]]) -> GroupIndex:
    """Build per-group centroids from (group, embedding) pairs.

    Every embedding is unit-normalized before averaging, so a group's
    centroid dotted with a unit query equals the mean of the member cosines.
    Near-cancelling groups are allowed but logged: their scores are simply
    near zero before the softmax.
    """
    sums: dict[ExpertId, np.ndarray] = {}
    counts: dict[ExpertId, int] = {}
    dim: int | None = None
    for group, embedding in corpus:
        vec = np.asarray(embedding, dtype=np.float64)
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise DimensionMismatch(
                f"embedding dimension {vec.shape[0]} != {dim} for group {group}"
            )
        unit = _unit(vec)
        if group in sums:
            sums[group] += unit
            counts[group] += 1
        else:
            sums[group] = unit.copy()
            counts[group] = 1
    if not sums:
        raise EmptyGroup("corpus contains no embeddings")
    groups = tuple(sums)
    centroids = []
    for gid in groups:
        centroid = sums[gid] / counts[gid]
        if float(np.linalg.norm(centroid)) < 1e-12:
            logger.warning("degenerate group %s: members cancel to a near-zero centroid", gid)
        centroids.append(tuple(float(v) for v in centroid))
    return GroupIndex(
        groups=groups,
        centroids=tuple(centroids),
        member_counts=tuple(counts[g] for g in groups),
    )


class AllocatorBackend(Protocol):
    """Produces one finite logit per registered expert, in registry order."""

    def logits(self, item: ModerationItem, experts: Sequence[ExpertId]) -> Sequence[float]: ...


class EmbeddingBackend(Protocol):
    """Maps text to a fixed-dimension embedding."""

    def embed(self, text: str) -> Sequence[float]: ...


def classification_allocate(
    item: ModerationItem,
    backend: AllocatorBackend,
    experts: Sequence[ExpertId],
    cfg: PipelineConfig,
) -> AllocationVector:
    """Softmax over classifier logits, one per registered expert."""
    try:
        logits = list(backend.logits(item, experts))
    except EngineError:
        raise
    except Exception as exc:
        raise BackendUnavailable(f"allocator backend failed: {exc}") from exc
    if len(logits) != len(experts):
        raise LogitCountMismatch(
            f"backend returned {len(logits)} logits for {len(experts)} experts"
        )
    weights = softmax(logits, cfg.resolved_temperature)
    return AllocationVector(experts=tuple(experts), weights=tuple(weights))


def similarity_allocate(
    item: ModerationItem,
    backend: EmbeddingBackend,
    index: GroupIndex,
    experts: Sequence[ExpertId],
    cfg: PipelineConfig,
) -> AllocationVector:
    """Averaged-cosine scores against each expert's group centroid, then a
    temperature softmax (0.1 unless configured otherwise)."""
    try:
        embedding = backend.embed(item.embedding_text())
    except EngineError:
        raise
    except Exception as exc:
        raise BackendUnavailable(f"embedding backend failed: {exc}") from exc
    scores = [index.mean_similarity(expert, embedding) for expert in experts]
    weights = softmax(scores, cfg.resolved_temperature)
    return AllocationVector(experts=tuple(experts), weights=tuple(weights))


def load_embedding_fixtures(
    path: str | Path, experts: Sequence[ExpertId]
) -> GroupIndex:
    """Build a GroupIndex from line-delimited JSON fixture records of the
    form {"group": str, "embedding": [float]}. Group names must match
    registered expert names."""
    by_name = {expert.name: expert for expert in experts}
    pairs: list[tuple[ExpertId, Sequence[float]]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            name = record["group"]
            if name not in by_name:
                raise MissingGroup(f"fixture line {lineno}: unknown group {name!r}")
            pairs.append((by_name[name], record["embedding"]))
    index = build_group_index(pairs)
    missing = [e.name for e in experts if e not in index.groups]
    if missing:
        raise MissingGroup(f"fixtures cover no embeddings for groups: {missing}")
    return index


class UniformAllocatorBackend:
    """Degenerate allocator: identical logits for every expert. Useful as a
    no-routing baseline."""

    def logits(self, item: ModerationItem, experts: Sequence[ExpertId]) -> list[float]:
        return [0.0] * len(experts)


class SubredditAllocatorBackend:
    """Routes by exact subreddit match: a high logit for the expert named
    after the item's subreddit, zero elsewhere. An offline stand-in for a
    trained source-community classifier."""

    def __init__(self, hit_logit: float = 8.0):
        self.hit_logit = hit_logit

    def logits(self, item: ModerationItem, experts: Sequence[ExpertId]) -> list[float]:
        return [
            self.hit_logit if expert.name == item.subreddit else 0.0
            for expert in experts
        ]


class HttpAllocatorBackend:
    """Wire client for the logits protocol:
    POST {base}/v1/logits {"context", "comment"} ->
    {"expert_order": [str], "logits": [float]}."""

    def __init__(self, base_url: str, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def logits(self, item: ModerationItem, experts: Sequence[ExpertId]) -> list[float]:
        try:
            resp = requests.post(
                f"{self.base_url}/v1/logits",
                json={"context": item.context, "comment": item.comment},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            body = resp.json()
        except Exception as exc:
            raise BackendUnavailable(f"allocator endpoint unreachable: {exc}") from exc
        logits = body.get("logits")
        order = body.get("expert_order")
        if not isinstance(logits, list):
            raise LogitCountMismatch("allocator response carries no logits list")
        if order is not None and list(order) != [e.name for e in experts]:
            raise LogitCountMismatch(
                f"allocator expert order {order} does not match registry order"
            )
        return [float(v) for v in logits]


class HttpEmbeddingBackend:
    """Wire client for the embedding protocol:
    POST {base}/v1/embed {"text"} -> {"embedding": [float]}."""

    def __init__(self, base_url: str, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def embed(self, text: str) -> list[float]:
        try:
            resp = requests.post(
                f"{self.base_url}/v1/embed", json={"text": text}, timeout=self.timeout
            )
            resp.raise_for_status()
            body = resp.json()
        except Exception as exc:
            raise BackendUnavailable(f"embedding endpoint unreachable: {exc}") from exc
        return [float(v) for v in body["embedding"]]


class HashedEmbeddingBackend:
    """Deterministic offline embedding: signed feature hashing of whitespace
    tokens onto a fixed-dimension unit vector. Lets the similarity strategy
    run end-to-end with no model server."""

    def __init__(self, dimension: int = 64):
        if dimension < 2:
            raise EngineError("embedding dimension must be >= 2", field="dimension")
        self.dimension = dimension

    def embed(self, text: str) -> list[float]:
        import hashlib

        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in text.lower().split():
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            idx = int.from_bytes(digest[:4], "big") % self.dimension
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[idx] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec[0] = 1.0
            norm = 1.0
        return [float(v) for v in vec / norm]
