"""The screening session state machine: issue top-k batches, accept
judgments, trigger strategy updates, record the per-iteration trace, and
derive the unified concatenated ranking.

A session owns one topic. Batches are issued against the remaining pool,
judged in full, and appended to the trace in issued rank order; examined
positions are never re-ordered.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import dense, sparse, tar
from .datastore import (
    DocumentRecord,
    EmbeddingSet,
    Qrels,
    Topic,
    topic_key,
)
from .dense import RocchioWeights, ScoredDoc
from .tar import LogisticHyperparams, SeedConfig, TarState

STRATEGIES = ("dense_rocchio", "bm25_static", "bm25_rm3_static", "tar_logistic")
FEEDBACK_SCOPES = ("batch", "cumulative")

DEFAULT_K = 25


class SessionError(ValueError):
    """Raised on protocol violations (stale tokens, incomplete judgments,
    operations on a finished session). The session state is unchanged."""


@dataclass
class Datasets:
    """Immutable bundle of everything a session reads."""

    corpus: list[DocumentRecord]
    topics: dict[str, Topic]
    embeddings: EmbeddingSet | None = None
    _index: sparse.InvertedIndex | None = field(default=None, repr=False)
    _docs_by_id: dict[str, DocumentRecord] | None = field(default=None, repr=False)

    def document(self, doc_id: str) -> DocumentRecord:
        if self._docs_by_id is None:
            self._docs_by_id = {r.doc_id: r for r in self.corpus}
        return self._docs_by_id[doc_id]

    def index(self) -> sparse.InvertedIndex:
        if self._index is None:
            self._index = sparse.build_index(self.corpus)
        return self._index


@dataclass(frozen=True)
class SessionConfig:
    topic_id: str
    strategy: str = "dense_rocchio"
    k: int = DEFAULT_K
    weights: RocchioWeights | None = None
    seed_config: SeedConfig | None = None
    max_iterations: int | None = None
    normalize_embeddings: bool = False
    feedback_scope: str = "batch"
    collection: str = "default"
    rm3_fb_docs: int = sparse.RM3_FB_DOCS_DEFAULT
    rm3_fb_terms: int = sparse.RM3_FB_TERMS_DEFAULT
    rm3_lambda: float = sparse.RM3_LAMBDA_DEFAULT
    hyperparams: LogisticHyperparams = LogisticHyperparams()

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise SessionError(f"unknown strategy {self.strategy!r}")
        if self.k < 1:
            raise SessionError(f"k must be >= 1, got {self.k}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise SessionError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.feedback_scope not in FEEDBACK_SCOPES:
            raise SessionError(f"unknown feedback_scope {self.feedback_scope!r}")
        if self.strategy == "dense_rocchio" and self.weights is None:
            object.__setattr__(self, "weights", RocchioWeights(1.0, 1.0, 1.0))
        if self.strategy == "tar_logistic" and self.seed_config is None:
            object.__setattr__(self, "seed_config", SeedConfig(mode="title"))

    def to_dict(self) -> dict:
        d: dict = {
            "topic_id": self.topic_id,
            "strategy": self.strategy,
            "k": self.k,
            "max_iterations": self.max_iterations,
            "normalize_embeddings": self.normalize_embeddings,
            "feedback_scope": self.feedback_scope,
            "collection": self.collection,
        }
        if self.weights is not None:
            d["weights"] = list(self.weights.as_tuple())
        if self.seed_config is not None:
            d["seed"] = {"mode": self.seed_config.mode, "pos_doc_id": self.seed_config.pos_doc_id}
        if self.strategy == "bm25_rm3_static":
            d["rm3"] = {
                "fb_docs": self.rm3_fb_docs,
                "fb_terms": self.rm3_fb_terms,
                "lambda": self.rm3_lambda,
            }
        return d

    @staticmethod
    def from_dict(d: dict) -> "SessionConfig":
        weights = None
        if d.get("weights") is not None:
            weights = RocchioWeights(*d["weights"])
        seed = None
        if d.get("seed") is not None:
            seed = SeedConfig(mode=d["seed"]["mode"], pos_doc_id=d["seed"].get("pos_doc_id"))
        rm3 = d.get("rm3", {})
        return SessionConfig(
            topic_id=d["topic_id"],
            strategy=d.get("strategy", "dense_rocchio"),
            k=d.get("k", DEFAULT_K),
            weights=weights,
            seed_config=seed,
            max_iterations=d.get("max_iterations"),
            normalize_embeddings=d.get("normalize_embeddings", False),
            feedback_scope=d.get("feedback_scope", "batch"),
            collection=d.get("collection", "default"),
            rm3_fb_docs=rm3.get("fb_docs", sparse.RM3_FB_DOCS_DEFAULT),
            rm3_fb_terms=rm3.get("fb_terms", sparse.RM3_FB_TERMS_DEFAULT),
            rm3_lambda=rm3.get("lambda", sparse.RM3_LAMBDA_DEFAULT),
        )


@dataclass
class BatchTrace:
    iteration: int
    doc_ids: list[str]
    scores: list[float]
    judgments: dict[str, bool] = field(default_factory=dict)


@dataclass
class SessionState:
    config: SessionConfig
    datasets: Datasets
    pool: tuple[str, ...]
    remaining: set[str]
    iteration: int = 0
    screened: list[tuple[str, bool, int]] = field(default_factory=list)
    issued_token: str | None = None
    issued_batch: list[ScoredDoc] | None = None
    finished: bool = False
    trace: list[BatchTrace] = field(default_factory=list)
    terminal_reason: str | None = None
    # strategy state
    current_query: np.ndarray | None = None
    initial_query: np.ndarray | None = None
    cumulative_pos: list[str] = field(default_factory=list)
    cumulative_neg: list[str] = field(default_factory=list)
    static_ranking: list[ScoredDoc] | None = None
    tar_state: TarState | None = None

    @property
    def relevant_found(self) -> int:
        return sum(1 for _d, rel, _i in self.screened if rel)

    def recall_curve(self) -> list[tuple[int, int]]:
        points = []
        screened = 0
        found = 0
        for batch in self.trace:
            if not batch.judgments:
                continue
            screened += len(batch.doc_ids)
            found += sum(1 for d in batch.doc_ids if batch.judgments[d])
            points.append((screened, found))
        return points


def _session_embeddings(config: SessionConfig, datasets: Datasets) -> EmbeddingSet:
    if datasets.embeddings is None:
        raise SessionError(f"strategy {config.strategy!r} requires embeddings")
    emb = datasets.embeddings
    if config.normalize_embeddings:
        emb = emb.normalized()
    return emb


def start_session(config: SessionConfig, datasets: Datasets) -> SessionState:
    """Initialize a session: full pool remaining, iteration 0, strategy state
    seeded from the topic."""
    topic = datasets.topics.get(config.topic_id)
    if topic is None:
        raise SessionError(f"unknown topic {config.topic_id!r}")
    state = SessionState(
        config=config,
        datasets=datasets,
        pool=topic.pool,
        remaining=set(topic.pool),
    )
    if config.strategy in ("dense_rocchio", "tar_logistic"):
        emb = _session_embeddings(config, datasets)
        tkey = topic_key(config.topic_id)
        if tkey not in emb:
            raise SessionError(f"no embedding for topic query {tkey!r}")
        for d in topic.pool:
            if d not in emb:
                raise SessionError(f"pool document {d!r} has no embedding")
        state.datasets = Datasets(
            corpus=datasets.corpus,
            topics=datasets.topics,
            embeddings=emb,
            _index=datasets._index,
            _docs_by_id=datasets._docs_by_id,
        )
        query = emb.vector(tkey).astype(np.float64)
        if config.strategy == "dense_rocchio":
            state.current_query = query
            state.initial_query = query.copy()
        else:
            seed = config.seed_config
            tar_state = TarState(hyperparams=config.hyperparams)
            if seed.mode == "title":
                tar_state.seed_examples.append((query, 1))
            else:
                if seed.pos_doc_id not in emb:
                    raise SessionError(f"seed document {seed.pos_doc_id!r} has no embedding")
                tar_state.seed_examples.append(
                    (emb.vector(seed.pos_doc_id).astype(np.float64), 1)
                )
            state.tar_state = tar_state
    else:
        index = datasets.index()
        for d in topic.pool:
            if d not in index.doc_lengths:
                raise SessionError(f"pool document {d!r} is not indexed")
        terms = sparse.tokenize(topic.title_query)
        if config.strategy == "bm25_static":
            state.static_ranking = sparse.bm25_rank(index, terms, topic.pool)
        else:
            state.static_ranking = sparse.bm25_rm3_rank(
                index,
                terms,
                topic.pool,
                fb_k=config.rm3_fb_docs,
                fb_terms=config.rm3_fb_terms,
                interpolation=config.rm3_lambda,
            )
    return state


def _current_ranking(state: SessionState) -> list[ScoredDoc]:
    config = state.config
    if config.strategy == "dense_rocchio":
        return dense.rank(
            state.current_query, state.pool, state.datasets.embeddings, exclude_set(state)
        )
    if config.strategy == "tar_logistic":
        return tar.tar_rank(
            state.tar_state, state.pool, state.datasets.embeddings, exclude_set(state)
        )
    # static strategies: walk down the precomputed ranking
    return [s for s in state.static_ranking if s.doc_id in state.remaining]


def exclude_set(state: SessionState) -> set[str]:
    return set(state.pool) - state.remaining


def next_batch(state: SessionState) -> tuple[str, list[ScoredDoc]]:
    """Issue the top min(k, |remaining|) of the strategy's current ranking.
    Exactly one batch may be outstanding at a time."""
    if state.finished:
        raise SessionError("session is finished")
    if state.issued_token is not None:
        raise SessionError("a batch is already outstanding; judge it first")
    ranking = _current_ranking(state)
    batch = ranking[: min(state.config.k, len(ranking))]
    token = f"batch-{state.iteration + 1:05d}"
    state.issued_token = token
    state.issued_batch = batch
    state.trace.append(
        BatchTrace(
            iteration=state.iteration + 1,
            doc_ids=[s.doc_id for s in batch],
            scores=[s.score for s in batch],
        )
    )
    return token, batch


def submit_feedback(
    state: SessionState, batch_token: str, judgments: Sequence[tuple[str, bool]]
) -> SessionState:
    """Apply a full batch of judgments, update the strategy, and advance the
    iteration counter. Invalid input leaves the state unchanged."""
    if state.issued_token is None:
        raise SessionError("no batch outstanding")
    if batch_token != state.issued_token:
        raise SessionError(f"stale or unknown batch token {batch_token!r}")
    issued_ids = [s.doc_id for s in state.issued_batch]
    judged_ids = [d for d, _r in judgments]
    if len(set(judged_ids)) != len(judged_ids):
        raise SessionError("duplicate doc_id in judgments")
    if set(judged_ids) != set(issued_ids):
        missing = sorted(set(issued_ids) - set(judged_ids))
        extra = sorted(set(judged_ids) - set(issued_ids))
        raise SessionError(
            f"judgments must cover the issued batch exactly (missing={missing}, extra={extra})"
        )

    verdict = dict(judgments)
    config = state.config

    # all validation passed: mutate
    state.trace[-1].judgments = {d: bool(verdict[d]) for d in issued_ids}
    for d in issued_ids:
        state.screened.append((d, bool(verdict[d]), state.iteration + 1))
        state.remaining.discard(d)

    if config.strategy == "dense_rocchio":
        emb = state.datasets.embeddings
        batch_pos = [d for d in issued_ids if verdict[d]]
        batch_neg = [d for d in issued_ids if not verdict[d]]
        state.cumulative_pos.extend(batch_pos)
        state.cumulative_neg.extend(batch_neg)
        if config.feedback_scope == "batch":
            # chain: update the previous query with this batch's feedback
            state.current_query = dense.rocchio_update(
                state.current_query,
                [emb.vector(d) for d in batch_pos],
                [emb.vector(d) for d in batch_neg],
                config.weights,
            )
        else:
            # rebuild from the initial query with all feedback so far
            state.current_query = dense.rocchio_update(
                state.initial_query,
                [emb.vector(d) for d in state.cumulative_pos],
                [emb.vector(d) for d in state.cumulative_neg],
                config.weights,
            )
    elif config.strategy == "tar_logistic":
        emb = state.datasets.embeddings
        tar.tar_step(
            state.tar_state,
            [(d, emb.vector(d).astype(np.float64), 1 if verdict[d] else 0) for d in issued_ids],
        )

    state.issued_token = None
    state.issued_batch = None
    state.iteration += 1
    if not state.remaining:
        state.finished = True
        state.terminal_reason = "exhausted"
    elif config.max_iterations is not None and state.iteration >= config.max_iterations:
        state.finished = True
        state.terminal_reason = "cutoff"
    return state


# ---------------------------------------------------------------------------
# Simulation and the screening record


@dataclass
class ScreeningRecord:
    """Full per-session trace: config, every batch with judgments and issue-
    time scores, and the terminal reason. Serializes to canonical JSON."""

    config: dict
    pool_size: int
    batches: list[BatchTrace]
    terminal_reason: str

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "pool_size": self.pool_size,
            "terminal_reason": self.terminal_reason,
            "batches": [
                {
                    "iteration": b.iteration,
                    "docs": [
                        {"doc_id": d, "score": s, "relevant": b.judgments[d]}
                        for d, s in zip(b.doc_ids, b.scores)
                    ],
                }
                for b in self.batches
            ],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"

    @staticmethod
    def from_json(text: str) -> "ScreeningRecord":
        payload = json.loads(text)
        batches = []
        for b in payload["batches"]:
            docs = b["docs"]
            batches.append(
                BatchTrace(
                    iteration=b["iteration"],
                    doc_ids=[d["doc_id"] for d in docs],
                    scores=[d["score"] for d in docs],
                    judgments={d["doc_id"]: d["relevant"] for d in docs},
                )
            )
        return ScreeningRecord(
            config=payload["config"],
            pool_size=payload["pool_size"],
            batches=batches,
            terminal_reason=payload["terminal_reason"],
        )


def record_from_state(state: SessionState) -> ScreeningRecord:
    if not state.finished:
        raise SessionError("cannot build a record from an unfinished session")
    return ScreeningRecord(
        config=state.config.to_dict(),
        pool_size=len(state.pool),
        batches=[b for b in state.trace if b.judgments],
        terminal_reason=state.terminal_reason,
    )


def run_simulation(config: SessionConfig, datasets: Datasets, qrels: Qrels) -> ScreeningRecord:
    """Screen the whole pool with qrels as the judgment oracle. Without a
    cutoff this takes exactly ceil(n/k) iterations."""
    state = start_session(config, datasets)
    while not state.finished:
        token, batch = next_batch(state)
        judgments = [
            (s.doc_id, qrels.is_relevant(config.topic_id, s.doc_id)) for s in batch
        ]
        submit_feedback(state, token, judgments)
    return record_from_state(state)


def concatenated_ranking(record: ScreeningRecord) -> list[str]:
    """Batches appended in iteration order, within-batch order preserved."""
    if not record.batches:
        raise SessionError("record has no batches")
    out: list[str] = []
    for b in record.batches:
        out.extend(b.doc_ids)
    return out


def expected_iterations(n: int, k: int) -> int:
    return math.ceil(n / k)
