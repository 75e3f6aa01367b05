"""Per-session orchestration: consolidate all layers, gate, retrieve, fuse, respond.

One step folds a session into the three layers, gates retrieval toward the
query, fuses under the entropy bound, generates a response through a pluggable
responder, and records the semantic drift against the pre-step graph. A run
folds steps from the zero state; replaying the same sessions reproduces
bit-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Protocol, Sequence

from .embedding import EmbedderConfig
from .memory import (
    EpisodicMemory,
    MemoryState,
    SemanticGraph,
    Session,
    WorkingMemory,
    extract_facts,
    merge_semantic,
    summarize,
    update_episodic,
    update_working,
)
from .retention import DriftReport, drift
from .retrieval import (
    FusedState,
    GatingWeights,
    Query,
    RetrievalResult,
    fuse,
    gate,
    make_query,
    retrieve,
)


class EngineRunError(RuntimeError):
    """A step failed mid-run; the session index is in the message."""


@dataclass(frozen=True)
class EngineConfig:
    """All knobs in one place, validated once at construction.

    enabled_layers and uniform_gating exist for the harness's baseline policies
    and ablation variants: a disabled layer is simply never consolidated, and
    uniform gating pins the weights at (1/3, 1/3, 1/3).
    """

    k: int = 8
    C_w: int = 256
    C_e: int = 16
    C_s: int = 64
    alpha: float = 0.6
    beta: float = 4.0
    lambda_: float = 0.5
    tau_s: float = 0.9
    epsilon: float = 2.0
    mix: float = 0.5
    top_j: int = 4
    token_budget: int = 512
    summary_m: int = 3
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    seed: int = 0
    enabled_layers: tuple[str, ...] = ("w", "e", "s")
    uniform_gating: bool = False

    def __post_init__(self) -> None:
        for name in ("k", "C_w", "C_e", "C_s", "top_j", "token_budget", "summary_m"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be finite and > 0, got {self.beta}")
        if self.lambda_ < 0.0:
            raise ValueError(f"lambda must be non-negative, got {self.lambda_}")
        if not 0.0 <= self.tau_s <= 1.0:
            raise ValueError(f"tau_s must lie in [0, 1], got {self.tau_s}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError(f"mix must lie in [0, 1], got {self.mix}")
        if not self.enabled_layers or any(layer not in ("w", "e", "s") for layer in self.enabled_layers):
            raise ValueError(f"enabled_layers must be a non-empty subset of (w, e, s), got {self.enabled_layers}")


@dataclass(frozen=True)
class StepOutput:
    state: MemoryState
    retrieval: RetrievalResult
    fused: FusedState
    drift: DriftReport
    response: str
    context_usage: float


class Responder(Protocol):
    def generate(self, fused: FusedState, query: Query) -> str: ...


class TemplateResponder:
    """Deterministic echo of the assembled context and the query."""

    def generate(self, fused: FusedState, query: Query) -> str:
        memory = "; ".join(line for line in fused.context_text.splitlines())
        return f"Based on memory: {memory} | answer to: {query.text}"


def initial_state(cfg: EngineConfig) -> MemoryState:
    """The zero state: empty layers, cursor -1."""
    return MemoryState(
        WorkingMemory.empty(cfg.k, cfg.C_w),
        EpisodicMemory.empty(cfg.embedder.dim, cfg.C_e, cfg.alpha),
        SemanticGraph.empty(cfg.C_s),
        -1,
    )


def step(
    state: MemoryState,
    session: Session,
    query: Query,
    cfg: EngineConfig,
    responder: Responder,
    *,
    history_tokens: int = 0,
) -> StepOutput:
    """One consolidate-gate-retrieve-fuse-respond step; the input state is untouched.

    ``history_tokens`` is the raw token total of previously ingested sessions;
    run() threads it so context_usage is measured against the full history.
    """
    if session.index != state.session_cursor + 1:
        raise ValueError(
            f"session {session.index} out of order; expected {state.session_cursor + 1}"
        )

    working = state.working
    episodic = state.episodic
    semantic = state.semantic

    if "w" in cfg.enabled_layers:
        working = update_working(state.working, session, cfg.embedder)
    if "e" in cfg.enabled_layers or "s" in cfg.enabled_layers:
        summary = summarize(session, cfg.summary_m, cfg.embedder)
        if "e" in cfg.enabled_layers:
            episodic = update_episodic(state.episodic, summary)
        if "s" in cfg.enabled_layers:
            facts = extract_facts(summary, session)
            semantic = merge_semantic(state.semantic, facts, session.index, cfg.tau_s, cfg.embedder)

    new_state = MemoryState(working, episodic, semantic, session.index)

    weights = GatingWeights.uniform(cfg.beta) if cfg.uniform_gating else gate(query, new_state, cfg.beta)
    retrieval = retrieve(query, new_state, cfg.beta, cfg.top_j, cfg.token_budget, weights=weights)
    fused = fuse(query, retrieval, cfg.mix, cfg.epsilon)
    response = responder.generate(fused, query)
    step_drift = drift(state.semantic, new_state.semantic)

    history = history_tokens + session.token_count()
    usage = min(1.0, fused.context_tokens / history) if history > 0 else 0.0
    return StepOutput(new_state, retrieval, fused, step_drift, response, usage)


def run(
    sessions: Sequence[Session],
    queries: Mapping[int, Query] | None,
    cfg: EngineConfig,
    responder: Responder | None = None,
    *,
    start_state: MemoryState | None = None,
    history_tokens: int = 0,
) -> list[StepOutput]:
    """Fold step over the sessions from the zero state (or a snapshot to resume).

    Steps without an explicit query default to the session's final utterance
    text. The first failing step aborts the run with its index.
    """
    responder = responder if responder is not None else TemplateResponder()
    queries = queries or {}
    state = start_state if start_state is not None else initial_state(cfg)
    outputs: list[StepOutput] = []
    history = history_tokens
    for session in sessions:
        query = queries.get(session.index)
        if query is None:
            query = make_query(session.utterances[-1].text, cfg.embedder, session.index)
        try:
            output = step(state, session, query, cfg, responder, history_tokens=history)
        except ValueError:
            raise
        except Exception as exc:
            raise EngineRunError(f"step for session {session.index} failed: {exc}") from exc
        outputs.append(output)
        state = output.state
        history += session.token_count()
    return outputs


def policy_config(cfg: EngineConfig, policy: str) -> EngineConfig:
    """Baseline policies: mlmf keeps all layers, the others keep exactly one."""
    if policy == "mlmf":
        return cfg
    if policy == "window_only":
        return replace(cfg, enabled_layers=("w",))
    if policy == "summary_only":
        return replace(cfg, enabled_layers=("e",))
    raise ValueError(f"unknown policy {policy!r}")
