"""Bipartite chunk-entity mention graph with materialized co-mention adjacency."""

from __future__ import annotations

import bisect
from collections import defaultdict, deque
from pathlib import Path
from urllib.parse import quote

from .entities import Entity, LabelIndex, entity_uri, normalize_label
from .errors import DataValidationError, NotFoundError


class MentionGraph:
    """Chunks, entities, ``mentions`` edges and ``isChunkOf`` membership.

    Built once by :func:`build_graph` and treated as read-only afterwards.
    """

    def __init__(self):
        self.chunks = {}            # chunk_id -> Chunk
        self.entities = {}          # entity_uri -> Entity
        self.chunk_of = {}          # chunk_id -> doc_id
        self.entity_chunks = {}     # entity_uri -> [chunk_id] sorted by (doc_id, seq)
        self.chunk_entities = {}    # chunk_id -> [entity_uri] in first-mention order
        self.neighbors = {}         # entity_uri -> {neighbor_uri: shared_chunks}
        self.label_index = LabelIndex()

    def __eq__(self, other):
        if not isinstance(other, MentionGraph):
            return NotImplemented
        return vars(self) == vars(other)

    @property
    def n_mentions(self) -> int:
        return sum(len(v) for v in self.chunk_entities.values())

    def _require_entity(self, uri):
        if uri not in self.entities:
            raise NotFoundError(f"unknown entity {uri!r}")

    def chunks_for_entity(self, uri: str) -> list[str]:
        self._require_entity(uri)
        return list(self.entity_chunks[uri])

    def entities_for_chunk(self, chunk_id: str) -> list[str]:
        if chunk_id not in self.chunks:
            raise NotFoundError(f"unknown chunk {chunk_id!r}")
        return list(self.chunk_entities[chunk_id])

    def co_mention_neighbors(self, uri: str) -> list[tuple[str, str, int]]:
        self._require_entity(uri)
        ranked = sorted(self.neighbors[uri].items(),
                        key=lambda kv: (-kv[1], normalize_label(self.entities[kv[0]].label), kv[0]))
        return [(n, self.entities[n].label, shared) for n, shared in ranked]

    def reachability_at_h(self, seeds, gold_chunks, h: int) -> float:
        """Fraction of gold chunks mentioning an entity within ``h`` co-mention hops of a seed."""
        if h < 0:
            raise ValueError("h must be >= 0")
        gold = set(gold_chunks)
        if not gold:
            return 1.0
        reached = {s for s in seeds if s in self.entities}
        queue = deque((s, 0) for s in sorted(reached))
        while queue:
            uri, depth = queue.popleft()
            if depth == h:
                continue
            for n in self.neighbors[uri]:
                if n not in reached:
                    reached.add(n)
                    queue.append((n, depth + 1))
        hit = sum(1 for c in gold if reached.intersection(self.chunk_entities.get(c, ())))
        return hit / len(gold)

    def iter_triples(self):
        for cid, doc_id in self.chunk_of.items():
            yield (_iri(cid), "<isChunkOf>", _iri(doc_id))
            for uri in self.chunk_entities[cid]:
                yield (_iri(cid), "<mentions>", _iri(uri))
        for uri, ent in self.entities.items():
            yield (_iri(uri), "<label>", _literal(ent.label))
            yield (_iri(uri), "<type>", _iri(ent.etype))


def _iri(value: str) -> str:
    return "<" + quote(value, safe="#/:@!$&'()*+,;=-._~") + ">"


def _literal(value: str) -> str:
    escaped = (value.replace("\\", "\\\\").replace('"', '\\"')
               .replace("\n", "\\n").replace("\r", "\\r"))
    return f'"{escaped}"'


def build_graph(docs, chunks, spans) -> MentionGraph:
    """Assign each span to every chunk whose character range contains its start."""
    known_docs = {d.doc_id for d in docs}
    graph = MentionGraph()

    by_doc = defaultdict(list)
    for ch in sorted(chunks, key=lambda c: (c.doc_id, c.seq)):
        if ch.doc_id not in known_docs:
            raise DataValidationError(f"chunk {ch.chunk_id} references unknown document {ch.doc_id!r}")
        graph.chunks[ch.chunk_id] = ch
        graph.chunk_of[ch.chunk_id] = ch.doc_id
        graph.chunk_entities[ch.chunk_id] = []
        by_doc[ch.doc_id].append(ch)
    starts = {d: [c.start_char for c in cs] for d, cs in by_doc.items()}

    labels = {}
    mention_sets = defaultdict(set)
    ordered = sorted(spans, key=lambda s: (s.doc_id, s.start_char, s.end_char, s.label, s.etype))
    for span in ordered:
        doc_chunks = by_doc.get(span.doc_id, [])
        # chunks are sorted by start; any chunk starting at or before the span may contain it
        hi = bisect.bisect_right(starts.get(span.doc_id, []), span.start_char)
        hits = [c for c in doc_chunks[:hi] if c.start_char <= span.start_char < c.end_char]
        if not hits:
            raise DataValidationError(
                f"span {span.label!r} at {span.doc_id}[{span.start_char}] falls in no chunk")
        uri = entity_uri(span.label, span.etype)
        labels.setdefault(uri, (span.label, span.etype))
        for c in hits:
            if uri not in mention_sets[c.chunk_id]:
                mention_sets[c.chunk_id].add(uri)
                graph.chunk_entities[c.chunk_id].append(uri)

    entity_chunks = defaultdict(list)
    for cid, uris in graph.chunk_entities.items():
        for uri in uris:
            entity_chunks[uri].append(cid)

    for uri in sorted(labels):
        label, etype = labels[uri]
        graph.entities[uri] = Entity(uri, label, etype, len(entity_chunks[uri]))
        graph.entity_chunks[uri] = entity_chunks[uri]
        graph.label_index.add(label, uri)
        graph.neighbors[uri] = {}

    for uris in graph.chunk_entities.values():
        for a in uris:
            for b in uris:
                if a != b:
                    graph.neighbors[a][b] = graph.neighbors[a].get(b, 0) + 1
    for uri in graph.neighbors:
        graph.neighbors[uri] = dict(sorted(graph.neighbors[uri].items()))
    return graph


def export_triples(graph: MentionGraph, path: str | Path) -> None:
    triples = sorted(set(graph.iter_triples()))
    Path(path).write_text("".join(" ".join(t) + " .\n" for t in triples), encoding="utf-8")
