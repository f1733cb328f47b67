"""Loading, validation, and persistence of corpora, topics, pools, qrels,
and document embeddings, plus a deterministic synthetic embedder so the
whole engine can run and be tested without any external encoder.

File formats:
  corpus   - JSON lines, fields ``id``, ``title``, ``abstract``
  topics   - JSON lines, fields ``topic_id``, ``title_query``,
             optional ``protocol_text``
  pools    - plain text, two whitespace-separated columns: topic_id doc_id
  qrels    - TREC 4-column text: topic iteration doc grade
  vectors  - binary, magic ``SLV1`` (see load_embeddings/save_embeddings)
"""

from __future__ import annotations

import json
import math
import os
import re
import struct
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

TOPIC_KEY_PREFIX = "topic:"

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

EMBEDDING_MAGIC = b"SLV1"


class DatasetError(ValueError):
    """Raised when an input file violates its format or its invariants."""


@dataclass(frozen=True)
class DocumentRecord:
    doc_id: str
    title: str
    abstract: str = ""

    def __post_init__(self):
        if not self.doc_id:
            raise DatasetError("document id must be non-empty")
        if any(c.isspace() for c in self.doc_id):
            raise DatasetError(f"document id contains whitespace: {self.doc_id!r}")

    @property
    def text(self) -> str:
        return self.title + " " + self.abstract


@dataclass(frozen=True)
class Topic:
    topic_id: str
    title_query: str
    pool: tuple[str, ...]
    protocol_text: str | None = None

    def __post_init__(self):
        if not self.topic_id:
            raise DatasetError("topic id must be non-empty")
        if not self.pool:
            raise DatasetError(f"topic {self.topic_id}: pool must be non-empty")
        if len(set(self.pool)) != len(self.pool):
            raise DatasetError(f"topic {self.topic_id}: duplicate doc ids in pool")


class Qrels:
    """Binary-graded relevance assessments keyed by (topic_id, doc_id).

    Grades > 0 are relevant; grade 0 and absent documents are non-relevant.
    """

    def __init__(self, entries: dict[tuple[str, str], int] | None = None):
        self.entries: dict[tuple[str, str], int] = dict(entries or {})

    def grade(self, topic_id: str, doc_id: str) -> int:
        return self.entries.get((topic_id, doc_id), 0)

    def is_relevant(self, topic_id: str, doc_id: str) -> bool:
        return self.grade(topic_id, doc_id) > 0

    def relevant_docs(self, topic_id: str) -> set[str]:
        return {d for (t, d), g in self.entries.items() if t == topic_id and g > 0}

    def topic_ids(self) -> set[str]:
        return {t for (t, _d) in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, Qrels) and self.entries == other.entries


class EmbeddingSet:
    """Fixed-dimension dense vectors keyed by document (or topic) id.

    Vectors are stored in one contiguous float32 matrix so that whole-pool
    scoring is a single matrix-vector product. Immutable after construction.
    """

    def __init__(self, dim: int, vectors: dict[str, np.ndarray]):
        if dim < 1:
            raise DatasetError(f"embedding dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self._ids: list[str] = list(vectors.keys())
        self._row: dict[str, int] = {d: i for i, d in enumerate(self._ids)}
        matrix = np.zeros((len(self._ids), dim), dtype=np.float32)
        for i, doc_id in enumerate(self._ids):
            v = np.asarray(vectors[doc_id], dtype=np.float32)
            if v.shape != (dim,):
                raise DatasetError(
                    f"vector for {doc_id!r} has shape {v.shape}, expected ({dim},)"
                )
            if not np.all(np.isfinite(v)):
                raise DatasetError(f"vector for {doc_id!r} has non-finite components")
            matrix[i] = v
        self._matrix = matrix
        self._matrix.setflags(write=False)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._row

    def __len__(self) -> int:
        return len(self._ids)

    def ids(self) -> list[str]:
        return list(self._ids)

    def vector(self, doc_id: str) -> np.ndarray:
        try:
            return self._matrix[self._row[doc_id]]
        except KeyError:
            raise KeyError(f"no embedding for {doc_id!r}") from None

    def rows(self, doc_ids: Iterable[str]) -> tuple[np.ndarray, list[str]]:
        """Return (read-only sub-matrix, ids) for the given ids, in order.

        Requesting every id in storage order returns the backing matrix
        without copying.
        """
        ids = list(doc_ids)
        if ids == self._ids:
            return self._matrix, ids
        row = self._row
        try:
            idx = np.array([row[d] for d in ids], dtype=np.intp)
        except KeyError as exc:
            raise KeyError(f"no embedding for {exc.args[0]!r}") from None
        sub = self._matrix[idx]
        sub.setflags(write=False)
        return sub, ids

    def normalized(self) -> "EmbeddingSet":
        """A copy with every vector scaled to unit L2 norm."""
        norms = np.linalg.norm(self._matrix.astype(np.float64), axis=1)
        if np.any(norms == 0.0):
            bad = self._ids[int(np.argmin(norms))]
            raise DatasetError(f"cannot normalize zero vector for {bad!r}")
        out = (self._matrix.astype(np.float64) / norms[:, None]).astype(np.float32)
        return EmbeddingSet(self.dim, {d: out[i] for i, d in enumerate(self._ids)})


def topic_key(topic_id: str) -> str:
    """Embedding-file key for a topic query vector (namespaced to avoid
    collision with document ids)."""
    return TOPIC_KEY_PREFIX + topic_id


# ---------------------------------------------------------------------------
# Parsing


def parse_corpus(stream: IO[str] | Iterable[str]) -> list[DocumentRecord]:
    """Parse a JSON-lines corpus. Rejects duplicate or malformed records,
    naming the offending line."""
    records: list[DocumentRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            rec = DocumentRecord(
                doc_id=str(obj["id"]),
                title=str(obj.get("title", "")),
                abstract=str(obj.get("abstract", "")),
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetError(f"corpus line {lineno}: malformed record ({exc})")
        if rec.doc_id in seen:
            raise DatasetError(f"corpus line {lineno}: duplicate id {rec.doc_id!r}")
        seen.add(rec.doc_id)
        records.append(rec)
    return records


def parse_topics(
    topic_stream: IO[str] | Iterable[str], pool_stream: IO[str] | Iterable[str]
) -> dict[str, Topic]:
    """Parse JSON-lines topics plus a two-column pool file into Topic objects,
    keyed by topic_id."""
    raw: dict[str, dict] = {}
    for lineno, line in enumerate(topic_stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            tid = str(obj["topic_id"])
            if not tid:
                raise KeyError("topic_id")
            entry = {
                "title_query": str(obj["title_query"]),
                "protocol_text": obj.get("protocol_text"),
            }
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetError(f"topics line {lineno}: malformed record ({exc})")
        if tid in raw:
            raise DatasetError(f"topics line {lineno}: duplicate topic_id {tid!r}")
        raw[tid] = entry

    pools: dict[str, list[str]] = {t: [] for t in raw}
    for lineno, line in enumerate(pool_stream, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DatasetError(f"pools line {lineno}: expected 2 columns, got {len(parts)}")
        tid, doc_id = parts
        if tid not in pools:
            raise DatasetError(f"pools line {lineno}: unknown topic_id {tid!r}")
        if doc_id in pools[tid]:
            raise DatasetError(f"pools line {lineno}: duplicate pool entry ({tid}, {doc_id})")
        pools[tid].append(doc_id)

    topics: dict[str, Topic] = {}
    for tid, entry in raw.items():
        topics[tid] = Topic(
            topic_id=tid,
            title_query=entry["title_query"],
            protocol_text=entry["protocol_text"],
            pool=tuple(pools[tid]),
        )
    return topics


def parse_qrels(stream: IO[str] | Iterable[str]) -> Qrels:
    """Parse TREC 4-column qrels (``topic iteration doc grade``)."""
    entries: dict[tuple[str, str], int] = {}
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DatasetError(f"qrels line {lineno}: expected 4 columns, got {len(parts)}")
        topic_id, _iter, doc_id, grade_s = parts
        try:
            grade = int(grade_s)
        except ValueError:
            raise DatasetError(f"qrels line {lineno}: non-integer grade {grade_s!r}")
        if grade < 0:
            raise DatasetError(f"qrels line {lineno}: negative grade {grade}")
        key = (topic_id, doc_id)
        if key in entries:
            raise DatasetError(f"qrels line {lineno}: duplicate key {key}")
        entries[key] = grade
    return Qrels(entries)


def format_qrels(qrels: Qrels) -> str:
    """Inverse of parse_qrels (insertion order preserved)."""
    return "".join(f"{t} 0 {d} {g}\n" for (t, d), g in qrels.entries.items())


# ---------------------------------------------------------------------------
# Embedding binary I/O


def save_embeddings(embeddings: EmbeddingSet, path: str | os.PathLike) -> None:
    """Write the SLV1 binary format. Atomic: written to a temp file in the
    same directory then renamed."""
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<I", embeddings.dim))
        fh.write(struct.pack("<Q", len(embeddings)))
        for doc_id in embeddings.ids():
            id_bytes = doc_id.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise DatasetError(f"id too long to serialize: {doc_id!r}")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(embeddings.vector(doc_id).astype("<f4").tobytes())
    os.replace(tmp, path)


def load_embeddings(path: str | os.PathLike) -> EmbeddingSet:
    """Read the SLV1 binary format; rejects corruption with a byte offset."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != EMBEDDING_MAGIC:
        raise DatasetError(f"bad magic at offset 0: {data[:4]!r}")
    if len(data) < 16:
        raise DatasetError(f"truncated header at offset {len(data)}")
    dim = struct.unpack_from("<I", data, 4)[0]
    count = struct.unpack_from("<Q", data, 8)[0]
    if dim < 1:
        raise DatasetError(f"invalid dim {dim} at offset 4")
    offset = 16
    vectors: dict[str, np.ndarray] = {}
    vec_bytes = 4 * dim
    for _ in range(count):
        if offset + 2 > len(data):
            raise DatasetError(f"truncated record header at offset {offset}")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + id_len + vec_bytes > len(data):
            raise DatasetError(f"truncated record at offset {offset}")
        doc_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        if doc_id in vectors:
            raise DatasetError(f"duplicate id {doc_id!r} at offset {offset}")
        vectors[doc_id] = vec
    if offset != len(data):
        raise DatasetError(f"trailing bytes at offset {offset}")
    return EmbeddingSet(dim, vectors)


# ---------------------------------------------------------------------------
# Synthetic embedder

_U64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    """64-bit finalizer (splitmix64 style); the only hash this embedder uses,
    so identical inputs give identical vectors on every platform."""
    x = (x + 0x9E3779B97F4A7C15) & _U64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _U64
    return x ^ (x >> 31)


def _ngram_hash(seed: int, ngram: str) -> int:
    h = _mix64(seed & _U64)
    for b in ngram.encode("utf-8"):
        h = _mix64(h ^ b)
    return h


def text_tokens(text: str) -> list[str]:
    """Lowercase alphanumeric tokens (underscore excluded)."""
    return _TOKEN_RE.findall(text.lower())


def embed_text(text: str, dim: int, seed: int) -> np.ndarray:
    """Hash word unigrams and bigrams into dim signed buckets, L2-normalized.

    Empty / token-free text maps to the bucket of the empty n-gram so the
    output is still a unit vector and a function of the text alone.
    """
    if dim < 2:
        raise DatasetError(f"synthetic embedding dim must be >= 2, got {dim}")
    tokens = text_tokens(text)
    ngrams = list(tokens)
    ngrams.extend(a + "\x1f" + b for a, b in zip(tokens, tokens[1:]))
    if not ngrams:
        ngrams = [""]
    vec = np.zeros(dim, dtype=np.float64)
    for g in ngrams:
        h = _ngram_hash(seed, g)
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        vec[h % dim] += sign
    norm = math.sqrt(float(np.dot(vec, vec)))
    if norm == 0.0:
        # opposite-signed collisions cancelled everything; fall back to a
        # deterministic single bucket derived from the whole text
        h = _ngram_hash(seed ^ 0xA5A5A5A5, "\x1f".join(ngrams))
        vec[h % dim] = 1.0
        norm = 1.0
    return (vec / norm).astype(np.float32)


def synthetic_embeddings(
    corpus: list[DocumentRecord],
    topics: dict[str, Topic],
    dim: int,
    seed: int,
) -> EmbeddingSet:
    """Deterministic hash-projection embeddings for every document (title +
    abstract) and every topic (title_query, stored under ``topic:<id>``)."""
    vectors: dict[str, np.ndarray] = {}
    for rec in corpus:
        vectors[rec.doc_id] = embed_text(rec.text, dim, seed)
    for topic in topics.values():
        vectors[topic_key(topic.topic_id)] = embed_text(topic.title_query, dim, seed)
    return EmbeddingSet(dim, vectors)


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    pool_docs_missing_from_corpus: list[tuple[str, str]] = field(default_factory=list)
    pool_docs_missing_embeddings: list[tuple[str, str]] = field(default_factory=list)
    qrels_docs_outside_pools: list[tuple[str, str]] = field(default_factory=list)
    topics_without_relevant: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (
            self.pool_docs_missing_from_corpus
            or self.pool_docs_missing_embeddings
            or self.qrels_docs_outside_pools
            or self.topics_without_relevant
        )

    def lines(self) -> list[str]:
        out = []
        for tid, did in self.pool_docs_missing_from_corpus:
            out.append(f"pool doc missing from corpus: topic={tid} doc={did}")
        for tid, did in self.pool_docs_missing_embeddings:
            out.append(f"pool doc missing embedding: topic={tid} doc={did}")
        for tid, did in self.qrels_docs_outside_pools:
            out.append(f"qrels doc outside pool: topic={tid} doc={did}")
        for tid in self.topics_without_relevant:
            out.append(f"topic has no relevant documents: topic={tid}")
        return out


def validate_dataset(
    corpus: list[DocumentRecord],
    topics: dict[str, Topic],
    qrels: Qrels,
    embeddings: EmbeddingSet | None,
) -> ValidationReport:
    """Cross-check the four inputs; reports problems, never raises."""
    report = ValidationReport()
    corpus_ids = {r.doc_id for r in corpus}
    for topic in topics.values():
        pool = set(topic.pool)
        for doc_id in topic.pool:
            if doc_id not in corpus_ids:
                report.pool_docs_missing_from_corpus.append((topic.topic_id, doc_id))
            if embeddings is not None and doc_id not in embeddings:
                report.pool_docs_missing_embeddings.append((topic.topic_id, doc_id))
        relevant = 0
        for (tid, did), grade in qrels.entries.items():
            if tid != topic.topic_id:
                continue
            if did not in pool:
                report.qrels_docs_outside_pools.append((tid, did))
            elif grade > 0:
                relevant += 1
        if relevant == 0:
            report.topics_without_relevant.append(topic.topic_id)
    return report
