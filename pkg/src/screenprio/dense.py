"""Dense vector operations: inner-product scoring, exact top-k ranking with
exclusion, and the Rocchio query update on dense representations.

All functions are pure over immutable inputs. Pairwise inner products are
computed in float64; pool scoring runs in the storage precision of the
embedding matrix so a full re-rank stays a single BLAS call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .datastore import EmbeddingSet

@dataclass(frozen=True)
class RocchioWeights:
    """(alpha, beta, gamma) for the previous query, the relevant-document
    mean, and the non-relevant-document mean respectively."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name, v in (("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)):
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"rocchio weight {name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, float(v))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)


class ScoredDoc(NamedTuple):
    doc_id: str
    score: float


def _check_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def inner_product(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    _check_dim(a, b)
    return float(np.dot(a.astype(np.float64), b.astype(np.float64)))


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = math.sqrt(float(np.dot(v, v)))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def _mean(vectors: Sequence[np.ndarray], dim: int) -> np.ndarray:
    """Mean of a list of vectors; the empty mean is the zero vector."""
    if not vectors:
        return np.zeros(dim, dtype=np.float64)
    acc = np.zeros(dim, dtype=np.float64)
    for v in vectors:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (dim,):
            raise ValueError(f"dimension mismatch: {v.shape} vs ({dim},)")
        acc += v
    return acc / len(vectors)


def rocchio_update(
    query: np.ndarray,
    positives: Sequence[np.ndarray],
    negatives: Sequence[np.ndarray],
    weights: RocchioWeights,
) -> np.ndarray:
    """alpha * q + beta * mean(positives) - gamma * mean(negatives).

    An empty positive or negative list contributes a zero vector, so the
    corresponding term drops out. The result is not re-normalized.
    """
    q = np.asarray(query, dtype=np.float64)
    dim = q.shape[0]
    pos_mean = _mean(positives, dim)
    neg_mean = _mean(negatives, dim)
    return weights.alpha * q + weights.beta * pos_mean - weights.gamma * neg_mean


def score_pool(
    query: np.ndarray, embeddings: EmbeddingSet, doc_ids: Sequence[str]
) -> np.ndarray:
    """Inner-product scores for the given docs, in the given order.

    The matrix-vector product runs in the storage precision of the embedding
    matrix (a single BLAS gemv, which is what keeps full-pool re-ranking
    cheap); the result is returned as float64.
    """
    matrix, _ids = embeddings.rows(doc_ids)
    q = np.asarray(query, dtype=np.float64)
    if matrix.shape[1] != q.shape[0]:
        raise ValueError(f"dimension mismatch: {matrix.shape[1]} vs {q.shape[0]}")
    return (matrix @ q.astype(matrix.dtype)).astype(np.float64)


def rank(
    query: np.ndarray,
    pool: Iterable[str],
    embeddings: EmbeddingSet,
    exclude: Iterable[str] = (),
) -> list[ScoredDoc]:
    """Exact descending-score ranking of pool minus exclude.

    Ties broken by ascending doc_id byte order; deterministic across runs
    and platforms.
    """
    excluded = set(exclude)
    ids = [d for d in pool if d not in excluded]
    if not ids:
        return []
    scores = score_pool(query, embeddings, ids)
    id_arr = np.array(ids)
    order = np.lexsort((id_arr, -scores))
    pairs = zip(id_arr[order].tolist(), scores[order].tolist())
    return list(map(ScoredDoc._make, pairs))
