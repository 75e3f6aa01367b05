"""Synthetic multi-session scenarios and the retention metric suite.

A scenario states each persona's facts in period 0 (as annotated utterances),
fills later periods with distractor chatter and occasional restatements, and
probes period-0 facts at every later period. True probes measure retention;
false probes carry values drawn from a vocabulary disjoint from every session
text, so a false memory can only arise from an erroneous graph merge.

Retention is containment-based: a probe counts as recalled when its gold value
appears in the probe's assembled context or in the graph's current value for
(subject, attribute). That removes generation quality from the measurement
entirely; the responder never grades anything.
"""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Any

from .embedding import Embedding, cosine, embed
from .engine import EngineConfig, policy_config, run
from .memory import FactTriple, MemoryState, Session, Utterance
from .retrieval import FusedState, GatingWeights, fuse, make_query, retrieve
from .snapshot import config_from_dict, config_to_dict

PERSONA_NAMES = (
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi",
    "ivan", "judy", "kevin", "laura", "mallory", "nina", "oscar", "peggy",
    "quentin", "rachel", "sybil", "trent", "ursula", "victor", "wendy",
    "xavier", "yolanda", "zach",
)

FACT_ATTRIBUTES = ("lives_in", "works", "likes", "plays", "speaks")

FACT_VALUES = {
    "lives_in": (
        "paris", "london", "tokyo", "madrid", "oslo", "cairo", "lima", "delhi",
        "rome", "quito", "berlin", "dublin", "athens", "vienna", "prague",
        "lisbon", "warsaw", "havana", "seoul", "bogota",
    ),
    "works": (
        "teacher", "engineer", "doctor", "baker", "pilot", "nurse", "chef",
        "farmer", "lawyer", "artist", "plumber", "tailor", "barista", "clerk",
        "guard", "miner", "sailor", "scribe", "smith", "tutor",
    ),
    "likes": (
        "jazz", "chess", "hiking", "painting", "cycling", "poetry", "origami",
        "astronomy", "karate", "surfing", "knitting", "archery", "juggling",
        "calligraphy", "skiing", "pottery", "dancing", "fencing", "rowing",
        "sculpting",
    ),
    "plays": (
        "piano", "violin", "drums", "flute", "cello", "guitar", "harp", "oboe",
        "banjo", "trumpet", "viola", "clarinet", "mandolin", "accordion",
        "bassoon", "ukulele", "organ", "fiddle", "tuba", "sitar",
    ),
    "speaks": (
        "spanish", "hindi", "french", "mandarin", "swahili", "arabic",
        "portuguese", "greek", "turkish", "dutch", "korean", "italian",
        "finnish", "polish", "hebrew", "thai", "bengali", "czech", "danish",
        "nepali",
    ),
}

FALSE_VALUES = (
    "zanzibar", "glassblowing", "falconry", "reykjavik", "beekeeping",
    "locksmithing", "ulaanbaatar", "taxidermy", "cartography", "marrakesh",
    "unicycling", "apothecary", "tbilisi", "spelunking", "haberdashery",
    "windhoek", "yodeling", "chandlery", "asuncion", "quilting",
)

DISTRACTOR_SENTENCES = (
    "the morning train arrived late again",
    "heavy fog settled over the bridge",
    "the market stalls opened at dawn",
    "a gentle breeze crossed the empty square",
    "the lecture ended earlier than planned",
    "new streetlights lined the avenue",
    "the ferry horn echoed twice",
    "fresh snow covered the rooftops",
    "the queue wrapped around the block",
    "bells rang from the tower at noon",
    "the old gate creaked in the wind",
    "distant thunder rolled over the hills",
    "the reading room reopened after repairs",
    "lanterns flickered along the waterfront",
    "wet leaves gathered by the kerb",
    "the last bus left without a sound",
)


@dataclass(frozen=True)
class Persona:
    name: str
    facts: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Probe:
    period: int
    question: str
    subject: str
    attribute: str
    gold_value: str
    kind: str
    introduced_at: int

    def __post_init__(self) -> None:
        if self.kind not in ("true_fact", "false_fact"):
            raise ValueError(f"unknown probe kind {self.kind!r}")
        if self.kind == "true_fact" and self.period <= self.introduced_at:
            raise ValueError("retention probes must come after the fact was introduced")


@dataclass(frozen=True)
class Scenario:
    personas: tuple[Persona, ...]
    periods: int
    sessions: tuple[Session, ...]
    probes: tuple[Probe, ...]
    seed: int


@dataclass(frozen=True)
class EvalReport:
    retention_at: dict[int, float]
    fmr: float
    mean_context_usage: float
    success_rate: float
    drift_curve: tuple[float, ...]
    config_echo: EngineConfig


def _fact_utterance(session_index: int, turn: int, name: str, attribute: str, value: str) -> Utterance:
    return Utterance.from_text(
        session_index,
        turn,
        name,
        f"{name} {attribute} {value}",
        (FactTriple(name, attribute, value, 1.0),),
    )


def generate_scenario(
    n_personas: int,
    periods: int,
    facts_per_persona: int = 3,
    distractors_per_session: int = 6,
    seed: int = 0,
) -> Scenario:
    """Deterministic scenario family: facts at period 0, probes at every later gap.

    Restatements repeat a persona fact with probability 0.1 per period. Fact
    values are drawn without replacement per attribute while the pools last, so
    personas do not share values at default sizes.
    """
    if n_personas < 1:
        raise ValueError("n_personas must be >= 1")
    if periods < 2:
        raise ValueError("periods must be >= 2")
    if not 1 <= facts_per_persona <= len(FACT_ATTRIBUTES):
        raise ValueError(f"facts_per_persona must lie in [1, {len(FACT_ATTRIBUTES)}]")
    if distractors_per_session < 0:
        raise ValueError("distractors_per_session must be >= 0")

    rng = random.Random(seed)

    pools = {attr: list(values) for attr, values in FACT_VALUES.items()}
    for pool in pools.values():
        rng.shuffle(pool)
    personas = []
    for i in range(n_personas):
        name = PERSONA_NAMES[i] if i < len(PERSONA_NAMES) else f"{PERSONA_NAMES[i % len(PERSONA_NAMES)]}{i}"
        facts = []
        for j in range(facts_per_persona):
            attribute = FACT_ATTRIBUTES[j]
            pool = pools[attribute]
            if pool:
                value = pool.pop()
            else:
                value = rng.choice(FACT_VALUES[attribute])
            facts.append((attribute, value))
        personas.append(Persona(name, tuple(facts)))

    sessions = []
    intro_utterances = []
    turn = 0
    for persona in personas:
        for attribute, value in persona.facts:
            intro_utterances.append(_fact_utterance(0, turn, persona.name, attribute, value))
            turn += 1
    sessions.append(Session(0, tuple(intro_utterances)))

    for period in range(1, periods):
        body: list[tuple[str, str, tuple[FactTriple, ...]]] = []
        for _ in range(distractors_per_session):
            body.append(("narrator", rng.choice(DISTRACTOR_SENTENCES), ()))
        for persona in personas:
            for attribute, value in persona.facts:
                if rng.random() < 0.1:
                    body.append(
                        (persona.name, f"{persona.name} {attribute} {value}",
                         (FactTriple(persona.name, attribute, value, 1.0),))
                    )
        rng.shuffle(body)
        utterances = [Utterance.from_text(period, 0, "narrator", f"day {period} began")]
        for offset, (speaker, text, annotations) in enumerate(body, start=1):
            utterances.append(Utterance.from_text(period, offset, speaker, text, annotations))
        sessions.append(Session(period, tuple(utterances)))

    probes = []
    for gap in range(1, periods):
        for pi, persona in enumerate(personas):
            attribute, value = persona.facts[(gap - 1 + pi) % len(persona.facts)]
            probes.append(
                Probe(gap, f"{persona.name} {attribute}", persona.name, attribute, value, "true_fact", 0)
            )
            false_attribute = persona.facts[(gap + pi) % len(persona.facts)][0]
            probes.append(
                Probe(
                    gap,
                    f"{persona.name} {false_attribute}",
                    persona.name,
                    false_attribute,
                    rng.choice(FALSE_VALUES),
                    "false_fact",
                    0,
                )
            )

    return Scenario(tuple(personas), periods, tuple(sessions), tuple(probes), seed)


def probe_state(probe: Probe, state: MemoryState, cfg: EngineConfig) -> FusedState:
    """Run the probe's own retrieval + fusion against a post-step state."""
    query = make_query(probe.question, cfg.embedder, probe.period)
    weights = GatingWeights.uniform(cfg.beta) if cfg.uniform_gating else None
    retrieval = retrieve(query, state, cfg.beta, cfg.top_j, cfg.token_budget, weights=weights)
    return fuse(query, retrieval, cfg.mix, cfg.epsilon)


def probe_hit(probe: Probe, state: MemoryState, fused: FusedState) -> bool:
    """Containment scoring: gold value in the context text or the graph value."""
    if probe.gold_value in fused.context_text:
        return True
    current = state.semantic.current_value(probe.subject, probe.attribute)
    return current is not None and probe.gold_value in current


def evaluate(scenario: Scenario, cfg: EngineConfig, policy: str = "mlmf") -> EvalReport:
    """Run the engine (or a reduced baseline) over the scenario and score every probe."""
    run_cfg = policy_config(cfg, policy)
    outputs = run(scenario.sessions, None, run_cfg)

    by_period: dict[int, list[Probe]] = defaultdict(list)
    for probe in scenario.probes:
        by_period[probe.period].append(probe)

    retained: dict[int, int] = defaultdict(int)
    asked: dict[int, int] = defaultdict(int)
    false_hits = 0
    false_total = 0
    for t, output in enumerate(outputs):
        for probe in by_period.get(t, ()):
            hit = probe_hit(probe, output.state, probe_state(probe, output.state, run_cfg))
            if probe.kind == "true_fact":
                gap = probe.period - probe.introduced_at
                asked[gap] += 1
                if hit:
                    retained[gap] += 1
            else:
                false_total += 1
                if hit:
                    false_hits += 1

    retention_at = {gap: retained[gap] / asked[gap] for gap in sorted(asked)}
    true_total = sum(asked.values())
    return EvalReport(
        retention_at=retention_at,
        fmr=false_hits / false_total if false_total else 0.0,
        mean_context_usage=(
            sum(o.context_usage for o in outputs) / len(outputs) if outputs else 0.0
        ),
        success_rate=sum(retained.values()) / true_total if true_total else 0.0,
        drift_curve=tuple(o.drift.total for o in outputs),
        config_echo=run_cfg,
    )


ABLATION_VARIANTS = ("full", "no_semantic", "no_episodic", "no_retention_loss", "no_gating")


def ablate(scenario: Scenario, cfg: EngineConfig) -> dict[str, EvalReport]:
    """Five reports, each removing exactly one mechanism from the full engine."""
    return {
        "full": evaluate(scenario, cfg),
        "no_semantic": evaluate(scenario, replace(cfg, enabled_layers=("w", "e"))),
        "no_episodic": evaluate(scenario, replace(cfg, enabled_layers=("w", "s"))),
        "no_retention_loss": evaluate(scenario, replace(cfg, lambda_=0.0)),
        "no_gating": evaluate(scenario, replace(cfg, uniform_gating=True)),
    }


def run_losses(scenario: Scenario, cfg: EngineConfig, policy: str = "mlmf") -> tuple[float, float]:
    """(gen_loss, ret_loss) for one engine run over the scenario.

    gen_loss is the mean over true probes of 1 - cosine(fused vector, embedded
    gold value); ret_loss is the cumulative semantic drift of the run.
    """
    run_cfg = policy_config(cfg, policy)
    outputs = run(scenario.sessions, None, run_cfg)
    ret_loss = float(sum(o.drift.total for o in outputs))

    by_period: dict[int, list[Probe]] = defaultdict(list)
    for probe in scenario.probes:
        if probe.kind == "true_fact":
            by_period[probe.period].append(probe)
    losses = []
    for t, output in enumerate(outputs):
        for probe in by_period.get(t, ()):
            fused = probe_state(probe, output.state, run_cfg)
            gold = embed(probe.gold_value, run_cfg.embedder)
            fused_embedding = Embedding(fused.vector, run_cfg.embedder.dim)
            losses.append(1.0 - cosine(fused_embedding, gold))
    gen_loss = sum(losses) / len(losses) if losses else 0.0
    return gen_loss, ret_loss


def objective_handle(scenario: Scenario, cfg: EngineConfig, policy: str = "mlmf"):
    """Evaluation handle for the tuner; caches runs per (alpha, beta)."""
    cache: dict[tuple[float, float], tuple[float, float]] = {}

    def evaluate_triple(alpha: float, beta: float, lambda_: float) -> tuple[float, float]:
        del lambda_
        key = (alpha, beta)
        if key not in cache:
            cache[key] = run_losses(scenario, replace(cfg, alpha=alpha, beta=beta), policy)
        return cache[key]

    return evaluate_triple


def report_to_dict(report: EvalReport) -> dict[str, Any]:
    return {
        "retention_at": {str(gap): value for gap, value in report.retention_at.items()},
        "fmr": report.fmr,
        "mean_context_usage": report.mean_context_usage,
        "success_rate": report.success_rate,
        "drift_curve": list(report.drift_curve),
        "config": config_to_dict(report.config_echo),
    }


def report_from_dict(data: dict[str, Any]) -> EvalReport:
    return EvalReport(
        retention_at={int(gap): value for gap, value in data["retention_at"].items()},
        fmr=data["fmr"],
        mean_context_usage=data["mean_context_usage"],
        success_rate=data["success_rate"],
        drift_curve=tuple(data["drift_curve"]),
        config_echo=config_from_dict(data["config"]),
    )
