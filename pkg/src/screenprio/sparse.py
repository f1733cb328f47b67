"""Sparse baseline: tokenization, inverted index, BM25 scoring, and RM3
pseudo-relevance-feedback expansion.

Defaults (k1=0.9, b=0.4; RM3 fb_docs=10, fb_terms=10, lambda=0.5) follow the
published defaults of the common Lucene-based retrieval toolchain. The idf
keeps the +1 inside the log so it is positive for every indexed term.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .datastore import DocumentRecord, text_tokens
from .dense import ScoredDoc

K1_DEFAULT = 0.9
B_DEFAULT = 0.4
RM3_FB_DOCS_DEFAULT = 10
RM3_FB_TERMS_DEFAULT = 10
RM3_LAMBDA_DEFAULT = 0.5


def tokenize(text: str) -> list[str]:
    """Lowercase, split on every non-alphanumeric codepoint, keep the rest.
    No stemming, no stopword removal."""
    return text_tokens(text)


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]] = field(default_factory=dict)
    doc_lengths: dict[str, int] = field(default_factory=dict)
    doc_terms: dict[str, Counter] = field(default_factory=dict)
    num_docs: int = 0
    avgdl: float = 0.0

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def term_freq(self, term: str, doc_id: str) -> int:
        return self.doc_terms[doc_id].get(term, 0)


def build_index(
    corpus: Sequence[DocumentRecord], stopwords: Iterable[str] = ()
) -> InvertedIndex:
    """Index title + " " + abstract of every document."""
    stop = set(stopwords)
    index = InvertedIndex()
    for rec in corpus:
        if rec.doc_id in index.doc_lengths:
            raise ValueError(f"duplicate doc_id {rec.doc_id!r}")
        terms = [t for t in tokenize(rec.text) if t not in stop]
        counts = Counter(terms)
        index.doc_lengths[rec.doc_id] = len(terms)
        index.doc_terms[rec.doc_id] = counts
        for term, tf in counts.items():
            index.postings.setdefault(term, []).append((rec.doc_id, tf))
    index.num_docs = len(index.doc_lengths)
    if index.num_docs:
        index.avgdl = sum(index.doc_lengths.values()) / index.num_docs
    return index


def idf(index: InvertedIndex, term: str) -> float:
    n, df = index.num_docs, index.df(term)
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def bm25_score(
    index: InvertedIndex,
    query_terms: Sequence[str],
    doc_id: str,
    k1: float = K1_DEFAULT,
    b: float = B_DEFAULT,
) -> float:
    """Sum over query terms (repeated terms count repeatedly) of
    idf * tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl))."""
    if index.num_docs < 1:
        raise ValueError("cannot score against an empty index")
    if doc_id not in index.doc_lengths:
        raise KeyError(f"unknown doc_id {doc_id!r}")
    dl = index.doc_lengths[doc_id]
    norm = k1 * (1.0 - b + b * dl / index.avgdl)
    score = 0.0
    counts = index.doc_terms[doc_id]
    for term in query_terms:
        tf = counts.get(term, 0)
        if tf == 0:
            continue
        score += idf(index, term) * tf * (k1 + 1.0) / (tf + norm)
    return score


def _ranked(pool_scores: list[ScoredDoc]) -> list[ScoredDoc]:
    return sorted(pool_scores, key=lambda s: (-s.score, s.doc_id))


def bm25_rank(
    index: InvertedIndex,
    query_terms: Sequence[str],
    pool: Iterable[str],
    exclude: Iterable[str] = (),
    k1: float = K1_DEFAULT,
    b: float = B_DEFAULT,
) -> list[ScoredDoc]:
    excluded = set(exclude)
    return _ranked(
        [
            ScoredDoc(d, bm25_score(index, query_terms, d, k1=k1, b=b))
            for d in pool
            if d not in excluded
        ]
    )


@dataclass(frozen=True)
class WeightedQuery:
    terms: dict[str, float]

    @staticmethod
    def uniform(query_terms: Sequence[str]) -> "WeightedQuery":
        """Uniform weight per token occurrence, so repeated query terms keep
        their query-side tf and the lambda=1 endpoint reproduces plain BM25
        ordering exactly."""
        if not query_terms:
            return WeightedQuery({})
        counts = Counter(query_terms)
        n = len(query_terms)
        return WeightedQuery({t: c / n for t, c in sorted(counts.items())})


def rm3_expand(
    index: InvertedIndex,
    original: WeightedQuery,
    fb_docs: Sequence[str],
    fb_terms: int,
    interpolation: float,
    k1: float = K1_DEFAULT,
    b: float = B_DEFAULT,
) -> WeightedQuery:
    """RM3: relevance model P(t|R) proportional to
    sum over fb docs of (tf/dl) * softmax-normalized BM25 score, truncated to
    the top fb_terms terms, then interpolated with the original query weights
    (lambda * original + (1-lambda) * relevance model) and renormalized.
    """
    if not fb_docs:
        raise ValueError("rm3_expand requires at least one feedback document")
    if fb_terms < 1:
        raise ValueError(f"fb_terms must be >= 1, got {fb_terms}")
    if not 0.0 <= interpolation <= 1.0:
        raise ValueError(f"interpolation must be in [0,1], got {interpolation}")

    query_terms = list(original.terms)
    raw = [bm25_score(index, query_terms, d, k1=k1, b=b) for d in fb_docs]
    peak = max(raw)
    exp = [math.exp(s - peak) for s in raw]
    z = sum(exp)
    doc_weights = [e / z for e in exp]

    rm: dict[str, float] = {}
    for doc_id, dw in zip(fb_docs, doc_weights):
        dl = index.doc_lengths[doc_id]
        if dl == 0:
            continue
        for term, tf in index.doc_terms[doc_id].items():
            rm[term] = rm.get(term, 0.0) + dw * tf / dl
    # keep the top fb_terms terms; ties by term for determinism
    kept = sorted(rm.items(), key=lambda kv: (-kv[1], kv[0]))[:fb_terms]
    total = sum(w for _t, w in kept)
    rm_norm = {t: w / total for t, w in kept} if total > 0 else {}

    lam = interpolation
    combined: dict[str, float] = {}
    for t, w in original.terms.items():
        combined[t] = combined.get(t, 0.0) + lam * w
    for t, w in rm_norm.items():
        combined[t] = combined.get(t, 0.0) + (1.0 - lam) * w
    z = sum(combined.values())
    if z == 0.0:
        raise ValueError("expanded query has zero total weight")
    return WeightedQuery({t: w / z for t, w in sorted(combined.items()) if w > 0.0})


def weighted_rank(
    index: InvertedIndex,
    query: WeightedQuery,
    pool: Iterable[str],
    exclude: Iterable[str] = (),
    k1: float = K1_DEFAULT,
    b: float = B_DEFAULT,
) -> list[ScoredDoc]:
    """Score every pool doc by sum over terms of weight * single-term BM25."""
    excluded = set(exclude)
    out = []
    for d in pool:
        if d in excluded:
            continue
        s = 0.0
        for term, w in query.terms.items():
            s += w * bm25_score(index, [term], d, k1=k1, b=b)
        out.append(ScoredDoc(d, s))
    return _ranked(out)


def bm25_rm3_rank(
    index: InvertedIndex,
    query_terms: Sequence[str],
    pool: Sequence[str],
    fb_k: int = RM3_FB_DOCS_DEFAULT,
    fb_terms: int = RM3_FB_TERMS_DEFAULT,
    interpolation: float = RM3_LAMBDA_DEFAULT,
    k1: float = K1_DEFAULT,
    b: float = B_DEFAULT,
) -> list[ScoredDoc]:
    """Two-pass BM25+RM3: first-pass BM25, top min(fb_k, |pool|) docs as
    pseudo-relevant, expand, then re-score the whole pool with the expanded
    weighted query."""
    if not pool:
        raise ValueError("pool must be non-empty")
    first = bm25_rank(index, query_terms, pool, k1=k1, b=b)
    fb = [s.doc_id for s in first[: min(fb_k, len(first))]]
    original = WeightedQuery.uniform(query_terms)
    expanded = rm3_expand(index, original, fb, fb_terms, interpolation, k1=k1, b=b)
    return weighted_rank(index, expanded, pool, k1=k1, b=b)
