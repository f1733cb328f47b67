import json

import numpy as np
import pytest

from screenprio.datastore import (
    DocumentRecord,
    EmbeddingSet,
    Qrels,
    Topic,
    topic_key,
)
from screenprio.loop import Datasets


def make_datasets(
    doc_vectors: dict[str, list[float]],
    topic_vector: list[float],
    topic_id: str = "T1",
    title_query: str = "test topic",
) -> Datasets:
    """In-memory Datasets with one topic whose pool is every document."""
    dim = len(topic_vector)
    corpus = [
        DocumentRecord(doc_id=d, title=f"title {d}", abstract=f"abstract {d}")
        for d in doc_vectors
    ]
    topics = {
        topic_id: Topic(
            topic_id=topic_id, title_query=title_query, pool=tuple(doc_vectors)
        )
    }
    vectors = {d: np.array(v, dtype=np.float32) for d, v in doc_vectors.items()}
    vectors[topic_key(topic_id)] = np.array(topic_vector, dtype=np.float32)
    return Datasets(corpus=corpus, topics=topics, embeddings=EmbeddingSet(dim, vectors))


def make_qrels(topic_id: str, relevant: list[str], non_relevant: list[str] = ()) -> Qrels:
    entries = {(topic_id, d): 1 for d in relevant}
    entries.update({(topic_id, d): 0 for d in non_relevant})
    return Qrels(entries)


def random_session_data(rng: np.random.Generator, n_docs: int, dim: int, topic_id: str = "T1"):
    """Random unit doc vectors + random unit query; a random subset relevant."""
    doc_ids = [f"D{i:04d}" for i in range(n_docs)]
    mat = rng.standard_normal((n_docs, dim))
    mat /= np.linalg.norm(mat, axis=1, keepdims=True)
    q = rng.standard_normal(dim)
    q /= np.linalg.norm(q)
    datasets = make_datasets(
        {d: mat[i].tolist() for i, d in enumerate(doc_ids)}, q.tolist(), topic_id=topic_id
    )
    n_rel = max(1, n_docs // 5)
    relevant = list(rng.choice(doc_ids, size=n_rel, replace=False))
    qrels = make_qrels(topic_id, relevant)
    return datasets, qrels, relevant


@pytest.fixture
def small_corpus():
    return [
        DocumentRecord("D1", "heart failure trials", "a randomized study of heart failure"),
        DocumentRecord("D2", "diabetes management", "insulin therapy outcomes"),
        DocumentRecord("D3", "heart surgery recovery", "post-operative heart care"),
        DocumentRecord("D4", "sleep apnea", "obstructive sleep apnea devices"),
        DocumentRecord("D5", "cardiac rehabilitation", "exercise after heart failure"),
    ]


@pytest.fixture
def dataset_files(tmp_path, small_corpus):
    """The same small dataset written to disk in every external format."""
    corpus_path = tmp_path / "corpus.jsonl"
    corpus_path.write_text(
        "".join(
            json.dumps({"id": r.doc_id, "title": r.title, "abstract": r.abstract}) + "\n"
            for r in small_corpus
        )
    )
    topics_path = tmp_path / "topics.jsonl"
    topics_path.write_text(
        json.dumps({"topic_id": "T1", "title_query": "heart failure rehabilitation"}) + "\n"
    )
    pools_path = tmp_path / "pools.txt"
    pools_path.write_text("".join(f"T1 {r.doc_id}\n" for r in small_corpus))
    qrels_path = tmp_path / "qrels.txt"
    qrels_path.write_text("T1 0 D1 1\nT1 0 D3 0\nT1 0 D5 1\n")
    manifest = tmp_path / "manifest.json"
    manifest.write_text(
        json.dumps(
            {
                "collection": "fixture",
                "corpus": str(corpus_path),
                "topics": str(topics_path),
                "pools": str(pools_path),
                "qrels": str(qrels_path),
                "embeddings": str(tmp_path / "vectors.slv"),
                "out": str(tmp_path / "out"),
            }
        )
    )
    return {
        "dir": tmp_path,
        "corpus": corpus_path,
        "topics": topics_path,
        "pools": pools_path,
        "qrels": qrels_path,
        "embeddings": tmp_path / "vectors.slv",
        "manifest": manifest,
        "out": tmp_path / "out",
    }
