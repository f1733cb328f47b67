"""Logistic-regression active-learning baseline with continuous relevance
feedback, operating on the same dense embeddings as the feedback-driven
query strategy so the comparison isolates the strategy, not the features.

Fitting is full-batch gradient descent with zero initialization and a fixed
epoch count: deterministic by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .datastore import EmbeddingSet
from .dense import ScoredDoc, score_pool


@dataclass(frozen=True)
class LogisticHyperparams:
    l2_lambda: float = 0.01
    learning_rate: float = 0.1
    epochs: int = 200

    def __post_init__(self):
        if self.l2_lambda < 0:
            raise ValueError(f"l2_lambda must be >= 0, got {self.l2_lambda}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass(frozen=True)
class SeedConfig:
    """How the active learner is bootstrapped: from the encoded review title
    or from one known-relevant document."""

    mode: str  # "title" | "pos"
    pos_doc_id: str | None = None

    def __post_init__(self):
        if self.mode not in ("title", "pos"):
            raise ValueError(f"seed mode must be 'title' or 'pos', got {self.mode!r}")
        if self.mode == "pos" and not self.pos_doc_id:
            raise ValueError("seed mode 'pos' requires pos_doc_id")


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    hyperparams: LogisticHyperparams


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(model: LogisticModel, x: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy plus (l2_lambda/2)*||w||^2 (bias unregularized)."""
    z = x @ model.weights + model.bias
    # log(1+exp(-z)) for y=1, log(1+exp(z)) for y=0, computed stably
    losses = np.logaddexp(0.0, z) - y * z
    reg = 0.5 * model.hyperparams.l2_lambda * float(np.dot(model.weights, model.weights))
    return float(np.mean(losses)) + reg


def fit_logistic(
    examples: Sequence[tuple[np.ndarray, int]],
    hyperparams: LogisticHyperparams = LogisticHyperparams(),
) -> LogisticModel:
    """Full-batch gradient descent on L2-regularized logistic loss.

    Requires at least one example of each class; callers with single-class
    data must use the centroid fallback instead.
    """
    if not examples:
        raise ValueError("no training examples")
    labels = {label for _v, label in examples}
    if labels != {0, 1}:
        raise ValueError(f"need both classes to fit, got labels {sorted(labels)}")
    x = np.stack([np.asarray(v, dtype=np.float64) for v, _l in examples])
    y = np.array([float(l) for _v, l in examples])
    n, dim = x.shape
    w = np.zeros(dim)
    b = 0.0
    lr = hyperparams.learning_rate
    lam = hyperparams.l2_lambda
    for _ in range(hyperparams.epochs):
        p = _sigmoid(x @ w + b)
        err = p - y
        grad_w = x.T @ err / n + lam * w
        grad_b = float(np.sum(err)) / n
        w -= lr * grad_w
        b -= lr * grad_b
    if not np.all(np.isfinite(w)) or not math.isfinite(b):
        raise ValueError("logistic fit diverged to non-finite weights")
    return LogisticModel(weights=w, bias=b, hyperparams=hyperparams)


def score_docs(
    model: LogisticModel,
    pool: Iterable[str],
    embeddings: EmbeddingSet,
    exclude: Iterable[str] = (),
) -> list[ScoredDoc]:
    """Rank by sigmoid(w.x + b) descending, doc_id tie-break."""
    excluded = set(exclude)
    ids = [d for d in pool if d not in excluded]
    if not ids:
        return []
    raw = score_pool(model.weights, embeddings, ids) + model.bias
    probs = _sigmoid(raw)
    order = np.lexsort((np.array(ids), -probs))
    return [ScoredDoc(ids[i], float(probs[i])) for i in order]


@dataclass
class TarState:
    """Accumulated (vector, label) pairs plus the seed example(s)."""

    hyperparams: LogisticHyperparams
    seed_examples: list[tuple[np.ndarray, int]] = field(default_factory=list)
    judged: list[tuple[str, np.ndarray, int]] = field(default_factory=list)
    model: LogisticModel | None = None

    def training_examples(self) -> list[tuple[np.ndarray, int]]:
        return list(self.seed_examples) + [(v, l) for _d, v, l in self.judged]


def tar_rank(
    state: TarState,
    pool: Iterable[str],
    embeddings: EmbeddingSet,
    exclude: Iterable[str] = (),
) -> list[ScoredDoc]:
    """Rank remaining docs with the fitted model, or fall back to inner
    product with the positive-example centroid when only one class exists."""
    if state.model is not None:
        return score_docs(state.model, pool, embeddings, exclude)
    positives = [v for v, l in state.training_examples() if l == 1]
    if not positives:
        raise ValueError("tar strategy has no positive examples to rank from")
    centroid = np.mean(np.stack([np.asarray(v, dtype=np.float64) for v in positives]), axis=0)
    from .dense import rank as dense_rank

    return dense_rank(centroid, pool, embeddings, exclude)


def tar_step(state: TarState, new_judgments: list[tuple[str, np.ndarray, int]]) -> TarState:
    """Append judgments; refit when both classes are present, otherwise keep
    the centroid fallback. Mutates and returns the state."""
    state.judged.extend(new_judgments)
    labels = {l for _v, l in state.training_examples()}
    if labels == {0, 1}:
        state.model = fit_logistic(state.training_examples(), state.hyperparams)
    return state
