"""Offline build of the retrieval substrate: chunks, mention graph and vector index."""

from __future__ import annotations

import json
from dataclasses import asdict
from functools import lru_cache
from pathlib import Path

from .corpus import Document, chunk_corpus
from .entities import MentionSpan, extract_entities_builtin
from .errors import DataValidationError
from .graph import MentionGraph, build_graph
from .vectors import ReferenceEmbedder, VectorIndex, embedder_from_spec

SNAPSHOT_VERSION = "kgnav-snapshot/1"


def extract_corpus_mentions(docs, gazetteer=None) -> list[MentionSpan]:
    spans = []
    for doc in docs:
        spans.extend(extract_entities_builtin(doc.text, gazetteer, doc_id=doc.doc_id))
    return spans


class KnowledgeBase:
    """Documents, chunks, mention graph and vector index shared by every controller."""

    def __init__(self, docs, chunks, spans, graph: MentionGraph, index: VectorIndex, embedder,
                 max_words: int = 240, overlap_words: int = 40):
        self.docs = list(docs)
        self.chunks = {c.chunk_id: c for c in chunks}
        self.spans = list(spans)
        self.graph = graph
        self.index = index
        self.embedder = embedder
        self.max_words = max_words
        self.overlap_words = overlap_words
        self._embed_cached = lru_cache(maxsize=4096)(self._embed_one)

    @classmethod
    def build(cls, docs, spans=None, gazetteer=None, embedder=None,
              max_words: int = 240, overlap_words: int = 40, embeddings=None) -> "KnowledgeBase":
        """Chunk, extract (unless ``spans`` is given), link and embed a corpus."""
        docs = list(docs)
        ids = [d.doc_id for d in docs]
        if len(set(ids)) != len(ids):
            raise DataValidationError("duplicate doc_id in corpus")
        chunks = chunk_corpus(docs, max_words, overlap_words)
        if spans is None:
            spans = extract_corpus_mentions(docs, gazetteer)
        graph = build_graph(docs, chunks, spans)
        embedder = embedder or ReferenceEmbedder()
        index = VectorIndex(embedder.dim)
        if embeddings is None:
            embeddings = embedder.embed([c.text for c in chunks])
        index.add_many([c.chunk_id for c in chunks], embeddings)
        return cls(docs, chunks, spans, graph, index, embedder, max_words, overlap_words)

    def _embed_one(self, text: str):
        vec = self.embedder.embed([text])[0]
        vec.setflags(write=False)
        return vec

    def embed_query(self, text: str):
        return self._embed_cached(text)

    def stats(self) -> dict:
        n_chunks = len(self.chunks)
        linked = sum(1 for v in self.graph.chunk_entities.values() if v)
        return {
            "documents": len(self.docs),
            "chunks": n_chunks,
            "entities": len(self.graph.entities),
            "mentions": self.graph.n_mentions,
            "entities_per_chunk": self.graph.n_mentions / n_chunks if n_chunks else 0.0,
            "chunks_with_entity": linked / n_chunks if n_chunks else 0.0,
            "co_mention_edges": sum(len(v) for v in self.graph.neighbors.values()) // 2,
        }

    def to_dict(self) -> dict:
        out = {
            "version": SNAPSHOT_VERSION,
            "chunking": {"max_words": self.max_words, "overlap_words": self.overlap_words},
            "embedder": self.embedder.spec(),
            "documents": [asdict(d) for d in self.docs],
            "mentions": [asdict(s) for s in self.spans],
        }
        if self.embedder.kind != "reference":
            out["embeddings"] = {cid: self.index.vector(cid).tolist() for cid in sorted(self.chunks)}
        return out

    def save(self, path: str | Path) -> None:
        text = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=1)
        Path(path).write_text(text + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeBase":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"{path}: snapshot is not valid JSON") from exc
        if data.get("version") != SNAPSHOT_VERSION:
            raise DataValidationError(f"{path}: unsupported snapshot version {data.get('version')!r}")
        docs = [Document(**d) for d in data["documents"]]
        spans = [MentionSpan(**s) for s in data["mentions"]]
        embedder = embedder_from_spec(data["embedder"])
        embeddings = None
        if "embeddings" in data:
            chunk_ids = [c.chunk_id for c in chunk_corpus(docs, **data["chunking"])]
            embeddings = [data["embeddings"][cid] for cid in chunk_ids]
        return cls.build(docs, spans=spans, embedder=embedder, embeddings=embeddings,
                         **data["chunking"])
