"""Retention drift between semantic graphs, the combined objective, and a grid tuner.

Drift is the summed squared displacement of entity embeddings shared by two
consecutive graphs; births and deaths contribute zero. The tuner sweeps
(alpha, beta, lambda) triples through a caller-supplied evaluation handle and
returns the argmin of gen_loss + lambda * ret_loss.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .embedding import Embedding
from .memory import SemanticGraph


class TuneError(RuntimeError):
    """A grid point's engine evaluation failed; the triple is in the message."""


@dataclass(frozen=True)
class DriftReport:
    per_entity: dict[str, float]
    total: float
    born: frozenset[str]
    died: frozenset[str]


@dataclass(frozen=True)
class ObjectiveValue:
    gen_loss: float
    ret_loss: float
    lambda_: float
    total: float


@dataclass(frozen=True)
class GridPoint:
    alpha: float
    beta: float
    lambda_: float
    objective: ObjectiveValue


@dataclass(frozen=True)
class TuneResult:
    best: tuple[float, float, float]
    objective: ObjectiveValue
    grid: tuple[GridPoint, ...]


def entity_projection(graph: SemanticGraph) -> dict[str, Embedding]:
    """Entity id -> node embedding for every node; empty graph -> empty map."""
    return {entity_id: node.embedding for entity_id, node in graph.nodes.items()}


def drift(prev: SemanticGraph, curr: SemanticGraph) -> DriftReport:
    """Squared embedding displacement per shared entity; born/died tracked separately."""
    before = entity_projection(prev)
    after = entity_projection(curr)
    per_entity: dict[str, float] = {}
    for entity_id in before:
        if entity_id not in after:
            continue
        a = before[entity_id]
        b = after[entity_id]
        if a.dim != b.dim:
            raise ValueError(f"embedding dim mismatch for {entity_id!r}: {a.dim} vs {b.dim}")
        delta = a.values - b.values
        per_entity[entity_id] = float(delta @ delta)
    born = frozenset(after) - frozenset(before)
    died = frozenset(before) - frozenset(after)
    return DriftReport(per_entity, float(sum(per_entity.values())), born, died)


def cumulative_retention_loss(trajectory: Sequence[SemanticGraph]) -> float:
    """Sum of drift totals over consecutive graph pairs; a single graph costs 0."""
    if len(trajectory) < 1:
        raise ValueError("trajectory must contain at least one graph")
    return float(sum(drift(a, b).total for a, b in zip(trajectory, trajectory[1:])))


def objective(gen_loss: float, ret_loss: float, lambda_: float) -> ObjectiveValue:
    """gen_loss + lambda * ret_loss with all inputs finite and non-negative."""
    for name, value in (("gen_loss", gen_loss), ("ret_loss", ret_loss), ("lambda", lambda_)):
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value}")
        if value < 0.0:
            raise ValueError(f"{name} must be non-negative, got {value}")
    return ObjectiveValue(gen_loss, ret_loss, lambda_, gen_loss + lambda_ * ret_loss)


def tune(
    evaluate_triple: Callable[[float, float, float], tuple[float, float]],
    alphas: Sequence[float],
    betas: Sequence[float],
    lambdas: Sequence[float],
) -> TuneResult:
    """Exhaustive sweep over the (alpha, beta, lambda) grid.

    ``evaluate_triple`` runs the full engine for one triple and returns
    (gen_loss, ret_loss). The winner is the minimal objective total; exact ties
    go to the lexicographically smallest triple. The grid is preserved in
    evaluation order (alphas outermost, lambdas innermost).
    """
    if not alphas or not betas or not lambdas:
        raise ValueError("all grid axes must be non-empty")
    for alpha in alphas:
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    for beta in betas:
        if not (beta > 0.0 and math.isfinite(beta)):
            raise ValueError(f"beta must be finite and > 0, got {beta}")
    for lambda_ in lambdas:
        if lambda_ < 0.0:
            raise ValueError(f"lambda must be non-negative, got {lambda_}")

    grid: list[GridPoint] = []
    for alpha, beta, lambda_ in itertools.product(alphas, betas, lambdas):
        try:
            gen_loss, ret_loss = evaluate_triple(alpha, beta, lambda_)
        except Exception as exc:
            raise TuneError(f"engine failed for (alpha={alpha}, beta={beta}, lambda={lambda_}): {exc}") from exc
        grid.append(GridPoint(alpha, beta, lambda_, objective(gen_loss, ret_loss, lambda_)))

    best = min(grid, key=lambda p: (p.objective.total, (p.alpha, p.beta, p.lambda_)))
    return TuneResult((best.alpha, best.beta, best.lambda_), best.objective, tuple(grid))


def grid_csv(result: TuneResult) -> str:
    """CSV of the sweep: alpha,beta,lambda,gen_loss,ret_loss,total with header."""
    lines = ["alpha,beta,lambda,gen_loss,ret_loss,total"]
    for point in result.grid:
        obj = point.objective
        lines.append(
            f"{point.alpha!r},{point.beta!r},{point.lambda_!r},"
            f"{obj.gen_loss!r},{obj.ret_loss!r},{obj.total!r}"
        )
    return "\n".join(lines) + "\n"
