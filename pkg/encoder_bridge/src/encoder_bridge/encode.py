"""Encoding pipeline: parse inputs, run the transformer, pool, write output."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from .slv import write_embeddings

TOPIC_PREFIX = "topic:"


@dataclass(frozen=True)
class EncodeJob:
    corpus_path: Path
    topics_path: Path
    model_name: str
    out_path: Path
    batch_size: int = 32
    max_len: int = 512

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")


def parse_corpus(path: Path) -> list[tuple[str, str, str]]:
    """JSON-lines of {id, title, abstract} -> [(id, title, abstract)]."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append((str(obj["id"]), str(obj["title"]), str(obj.get("abstract", ""))))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    if not out:
        raise ValueError(f"{path}: empty corpus")
    return out


def parse_topics(path: Path) -> list[tuple[str, str]]:
    """JSON-lines of {topic_id, title_query} -> [(topic_id, title_query)]."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append((str(obj["topic_id"]), str(obj["title_query"])))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    if not out:
        raise ValueError(f"{path}: empty topics file")
    return out


def _check_ids(doc_ids: list[str], topic_ids: list[str]) -> None:
    seen: set[str] = set()
    for rec_id in doc_ids + [TOPIC_PREFIX + t for t in topic_ids]:
        if rec_id in seen:
            raise ValueError(f"duplicate record id {rec_id!r}")
        seen.add(rec_id)


def mean_pool(hidden: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
    """Mask-weighted mean over the final-layer token states."""
    mask = attention_mask.unsqueeze(-1).to(hidden.dtype)
    summed = (hidden * mask).sum(dim=1)
    counts = mask.sum(dim=1).clamp(min=1.0)
    return summed / counts


class Encoder:
    def __init__(self, model_name: str, max_len: int):
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModel.from_pretrained(model_name)
        self.model.eval()
        self.max_len = max_len
        self.dim = int(self.model.config.hidden_size)

    @torch.no_grad()
    def encode_pairs(self, pairs: list[tuple[str, str | None]], batch_size: int) -> np.ndarray:
        """Encode (text, optional second segment) pairs with mean pooling.

        Two-segment inputs use the tokenizer's own pair encoding, so the
        model's separator sits between title and abstract.
        """
        vectors = np.empty((len(pairs), self.dim), dtype=np.float32)
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            firsts = [first for first, _second in chunk]
            seconds = [second if second else "" for _first, second in chunk]
            encoded = self.tokenizer(
                firsts,
                seconds,
                padding=True,
                truncation=True,
                max_length=self.max_len,
                return_tensors="pt",
            )
            hidden = self.model(**encoded).last_hidden_state
            pooled = mean_pool(hidden, encoded["attention_mask"])
            vectors[start : start + len(chunk)] = pooled.cpu().numpy().astype(np.float32)
        return vectors


def run_job(job: EncodeJob) -> dict:
    """Encode every document and topic, write the embedding file plus its
    sidecar metadata, and return the metadata."""
    corpus = parse_corpus(job.corpus_path)
    topics = parse_topics(job.topics_path)
    _check_ids([d for d, _t, _a in corpus], [t for t, _q in topics])

    encoder = Encoder(job.model_name, job.max_len)
    doc_vectors = encoder.encode_pairs(
        [(title, abstract) for _id, title, abstract in corpus], job.batch_size
    )
    topic_vectors = encoder.encode_pairs(
        [(query, None) for _id, query in topics], job.batch_size
    )

    records = [(doc_id, doc_vectors[i]) for i, (doc_id, _t, _a) in enumerate(corpus)]
    records += [
        (TOPIC_PREFIX + topic_id, topic_vectors[i])
        for i, (topic_id, _q) in enumerate(topics)
    ]
    write_embeddings(job.out_path, encoder.dim, records)

    metadata = {
        "model": job.model_name,
        "pooling": "mean over final-layer token states, attention-masked",
        "document_text": "title and abstract as a tokenizer segment pair",
        "topic_text": "title_query as a single segment",
        "max_len": job.max_len,
        "batch_size": job.batch_size,
        "dim": encoder.dim,
        "documents": len(corpus),
        "topics": len(topics),
    }
    sidecar = job.out_path.with_name(job.out_path.name + ".meta.json")
    sidecar.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return metadata
