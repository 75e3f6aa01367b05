"""Layer relevances, softmax gating, budgeted retrieval, and bounded fusion.

Gating turns the three layer similarities into a temperature-controlled
probability simplex. Retrieval blends the layer representation vectors with
those weights and admits per-layer top items greedily under a token budget.
Fusion mixes the query with the retrieval vector and sharpens it until the
entropy of its magnitude distribution falls under the configured bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedding import Embedding, EmbedderConfig, cosine, embed
from .memory import MemoryState

LAYERS = ("w", "e", "s")

_LAYER_RANK = {"w": 0, "e": 1, "s": 2}

SHARPEN_MAX_ITERATIONS = 64


class EntropyBoundError(RuntimeError):
    """Sharpening could not bring the fused vector under the entropy bound."""


@dataclass(frozen=True)
class Query:
    text: str
    embedding: Embedding
    session_index: int


def make_query(text: str, embedder: EmbedderConfig, session_index: int) -> Query:
    return Query(text, embed(text, embedder), session_index)


@dataclass(frozen=True)
class GatingWeights:
    """Softmax layer importances; always a probability simplex point."""

    gamma_w: float
    gamma_e: float
    gamma_s: float
    beta: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.gamma_w, self.gamma_e, self.gamma_s)

    def for_layer(self, layer: str) -> float:
        return self.as_tuple()[_LAYER_RANK[layer]]

    @classmethod
    def uniform(cls, beta: float) -> "GatingWeights":
        return cls(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, beta)


@dataclass(frozen=True)
class RetrievedItem:
    layer: str
    text: str
    similarity: float
    score: float
    session_index: int
    turn_index: int
    speaker: str
    token_count: int


@dataclass(frozen=True)
class RetrievalResult:
    vector: np.ndarray
    weights: GatingWeights
    working_items: tuple[RetrievedItem, ...]
    episodic_items: tuple[RetrievedItem, ...]
    semantic_items: tuple[RetrievedItem, ...]
    token_cost: int

    def all_items(self) -> tuple[RetrievedItem, ...]:
        merged = self.working_items + self.episodic_items + self.semantic_items
        return tuple(
            sorted(
                merged,
                key=lambda i: (-i.score, i.session_index, i.turn_index, _LAYER_RANK[i.layer], i.text),
            )
        )


@dataclass(frozen=True)
class FusedState:
    vector: np.ndarray
    entropy: float
    context_text: str
    context_tokens: int


def layer_representation(state: MemoryState, layer: str) -> Embedding:
    """One vector per layer: working mean, episodic state, importance-weighted node mean.

    Means are renormalized to unit length; an empty layer yields the zero vector.
    """
    dim = state.episodic.state.dim
    if layer == "w":
        if not state.working.entries:
            return Embedding.zeros(dim)
        mean = np.mean([e.values for _, e in state.working.entries], axis=0)
        return _renormalized(mean, dim)
    if layer == "e":
        return state.episodic.state
    if layer == "s":
        nodes = list(state.semantic.nodes.values())
        if not nodes:
            return Embedding.zeros(dim)
        total = sum(n.importance for n in nodes)
        if total <= 0.0:
            return Embedding.zeros(dim)
        mean = np.zeros(dim)
        for node in nodes:
            mean += (node.importance / total) * node.embedding.values
        return _renormalized(mean, dim)
    raise ValueError(f"unknown layer {layer!r}")


def _renormalized(vec: np.ndarray, dim: int) -> Embedding:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return Embedding.zeros(dim)
    return Embedding(vec / norm, dim)


def softmax_weights(relevances: tuple[float, float, float], beta: float) -> tuple[float, float, float]:
    """Overflow-safe softmax of beta-scaled relevances."""
    if not (beta > 0.0 and math.isfinite(beta)):
        raise ValueError(f"beta must be finite and > 0, got {beta}")
    scaled = [beta * r for r in relevances]
    top = max(scaled)
    exps = [math.exp(s - top) for s in scaled]
    total = sum(exps)
    return tuple(e / total for e in exps)


def gate(query: Query, state: MemoryState, beta: float) -> GatingWeights:
    """Softmax over the query's cosine to each layer representation."""
    relevances = tuple(cosine(query.embedding, layer_representation(state, layer)) for layer in LAYERS)
    gamma_w, gamma_e, gamma_s = softmax_weights(relevances, beta)
    return GatingWeights(gamma_w, gamma_e, gamma_s, beta)


def _layer_candidates(
    query: Query, state: MemoryState, layer: str, top_j: int
) -> list[tuple[float, int, int, str, str, int]]:
    """Top-j (similarity, session, turn, speaker, text, tokens) rows for one layer."""
    raw: list[tuple[float, int, int, str, str, int]] = []
    if layer == "w":
        for utterance, embedding in state.working.entries:
            raw.append(
                (
                    cosine(embedding, query.embedding),
                    utterance.session_index,
                    utterance.turn_index,
                    utterance.speaker,
                    utterance.text,
                    utterance.token_count,
                )
            )
    elif layer == "e":
        for record in state.episodic.log:
            raw.append(
                (
                    cosine(record.embedding, query.embedding),
                    record.session_index,
                    -1,
                    "summary",
                    record.text,
                    len(record.text.split()),
                )
            )
    else:
        for node in state.semantic.nodes.values():
            text = node.text()
            raw.append(
                (
                    cosine(node.embedding, query.embedding),
                    node.last_updated,
                    -1,
                    "fact",
                    text,
                    len(text.split()),
                )
            )
    raw.sort(key=lambda r: (-r[0], r[1], r[2], r[4]))
    return raw[:top_j]


def retrieve(
    query: Query,
    state: MemoryState,
    beta: float,
    top_j: int,
    token_budget: int,
    weights: GatingWeights | None = None,
) -> RetrievalResult:
    """Gated retrieval vector plus greedy token-budgeted item admission.

    Items are scored layer-cosine times the layer's gate weight and admitted in
    descending score, skipping any item that would overflow the budget
    (ties: lower session_index, then lower turn_index). Passing ``weights``
    overrides the softmax gate (used for forced-uniform gating).
    """
    if top_j < 1:
        raise ValueError("top_j must be >= 1")
    if token_budget < 1:
        raise ValueError("token_budget must be >= 1")
    if weights is None:
        weights = gate(query, state, beta)

    dim = state.episodic.state.dim
    vector = np.zeros(dim)
    for layer in LAYERS:
        vector += weights.for_layer(layer) * layer_representation(state, layer).values

    candidates: list[RetrievedItem] = []
    for layer in LAYERS:
        gamma = weights.for_layer(layer)
        for sim, sess, turn, speaker, text, tokens in _layer_candidates(query, state, layer, top_j):
            candidates.append(
                RetrievedItem(layer, text, sim, gamma * sim, sess, turn, speaker, tokens)
            )
    candidates.sort(key=lambda i: (-i.score, i.session_index, i.turn_index, _LAYER_RANK[i.layer], i.text))

    admitted: list[RetrievedItem] = []
    spent = 0
    for item in candidates:
        if spent + item.token_count > token_budget:
            continue
        admitted.append(item)
        spent += item.token_count

    per_layer = {layer: tuple(i for i in admitted if i.layer == layer) for layer in LAYERS}
    return RetrievalResult(vector, weights, per_layer["w"], per_layer["e"], per_layer["s"], spent)


def entropy(vector: np.ndarray) -> float:
    """Shannon entropy (natural log) of the L1-normalized magnitude distribution.

    The zero vector has no mass to distribute and is assigned entropy 0.
    """
    magnitudes = np.abs(np.asarray(vector, dtype=np.float64))
    total = float(magnitudes.sum())
    if total == 0.0:
        return 0.0
    p = magnitudes / total
    nonzero = p[p > 0.0]
    return float(-(nonzero * np.log(nonzero)).sum())


def _softmax_sharpened(magnitudes: np.ndarray, tau: float) -> np.ndarray:
    scaled = magnitudes / tau
    scaled -= scaled.max()
    exps = np.exp(scaled)
    return exps / exps.sum()


def fuse(query: Query, retrieval: RetrievalResult, mix: float, epsilon: float) -> FusedState:
    """Convex query/retrieval mix, sharpened until entropy <= epsilon.

    Sharpening replaces the vector with softmax(|raw| / tau) at tau halved per
    iteration; after 64 halvings (only exact magnitude ties survive that long)
    it falls back to a first-argmax one-hot. A bound below the one-hot limit
    raises EntropyBoundError. Context is the admitted items' prefixed texts
    joined newest-last.
    """
    if not 0.0 <= mix <= 1.0:
        raise ValueError(f"mix must lie in [0, 1], got {mix}")
    raw = mix * query.embedding.values + (1.0 - mix) * retrieval.vector
    vector = raw
    h = entropy(raw)
    if h > epsilon:
        magnitudes = np.abs(raw)
        solved = False
        for k in range(1, SHARPEN_MAX_ITERATIONS + 1):
            candidate = _softmax_sharpened(magnitudes, 0.5**k)
            ch = entropy(candidate)
            if ch <= epsilon:
                vector, h, solved = candidate, ch, True
                break
        if not solved:
            one_hot = np.zeros_like(raw)
            one_hot[int(np.argmax(magnitudes))] = 1.0
            h = entropy(one_hot)
            if h > epsilon:
                raise EntropyBoundError(
                    f"cannot satisfy entropy bound {epsilon} (one-hot limit is {h})"
                )
            vector = one_hot

    ordered = sorted(
        retrieval.all_items(),
        key=lambda i: (i.session_index, i.turn_index, _LAYER_RANK[i.layer], i.text),
    )
    context_text = "\n".join(f"{i.speaker}: {i.text}" for i in ordered)
    return FusedState(vector, h, context_text, len(context_text.split()))
