"""The nine navigator tools, per-question exploration state and trace logging."""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

from .entities import entity_search
from .errors import GatewayError

PREVIEW_CHARS = 200
ERROR_PREFIX = "ERROR: "

# name -> (required params, optional params with defaults); types: str, int, list of str
_STR, _INT, _STRS = "string", "integer", "array<string>"

TOOL_SCHEMAS = [
    {"name": "entity_search", "description": "NER + fuzzy-match entity search over graph labels",
     "parameters": {"query": _STR}, "required": ["query"]},
    {"name": "get_chunks_for_entity", "description": "Return chunks mentioning an entity",
     "parameters": {"uri": _STR}, "required": ["uri"]},
    {"name": "vector_search", "description": "Semantic similarity search over chunks",
     "parameters": {"query": _STR, "k": _INT}, "required": ["query"]},
    {"name": "expand_neighbors", "description": "Find co-mentioned entities via shared chunks",
     "parameters": {"uri": _STR}, "required": ["uri"]},
    {"name": "read_chunk", "description": "Read full text and entity list of a chunk",
     "parameters": {"id": _STR}, "required": ["id"]},
    {"name": "sub_query", "description": "Recursive sub-query over a chunk subset",
     "parameters": {"question": _STR, "chunk_ids": _STRS}, "required": ["question", "chunk_ids"]},
    {"name": "summarize_chunks", "description": "Compress gathered evidence",
     "parameters": {"ids": _STRS, "focus": _STR}, "required": ["ids", "focus"]},
    {"name": "collect_chunk", "description": "Mark a chunk as relevant evidence",
     "parameters": {"id": _STR, "relevance": _STR}, "required": ["id"]},
    {"name": "rerank_evidence", "description": "Re-rank collected chunks by vector similarity",
     "parameters": {"question": _STR}, "required": ["question"]},
]
TOOL_NAMES = frozenset(t["name"] for t in TOOL_SCHEMAS)
_SCHEMA_BY_NAME = {t["name"]: t for t in TOOL_SCHEMAS}


def _type_ok(value, kind) -> bool:
    if kind == _STR:
        return isinstance(value, str)
    if kind == _INT:
        return isinstance(value, int) and not isinstance(value, bool) and value >= 1
    return isinstance(value, list) and all(isinstance(v, str) for v in value)


def validate_action(tool: str, args) -> bool:
    schema = _SCHEMA_BY_NAME.get(tool)
    if schema is None or not isinstance(args, dict):
        return False
    params = schema["parameters"]
    if set(args) - set(params) or set(schema["required"]) - set(args):
        return False
    return all(_type_ok(v, params[k]) for k, v in args.items())


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


@dataclass
class ToolCall:
    turn: int
    tool: str
    args: dict
    result_digest: str
    token_estimate: int
    wall_ms: int
    result_ids: list = field(default_factory=list)
    error: bool = False


@dataclass
class ExplorationState:
    """Per-question controller state. Ordered sets are dicts with ``None`` values."""

    explored_entities: dict = field(default_factory=dict)
    collected: dict = field(default_factory=dict)
    frontier: dict = field(default_factory=dict)
    stall_counter: int = 0
    turn: int = 0
    tool_calls: list = field(default_factory=list)

    def add_frontier(self, uris) -> None:
        for uri in uris:
            if uri not in self.explored_entities:
                self.frontier.setdefault(uri, None)

    def mark_explored(self, uri) -> None:
        self.frontier.pop(uri, None)
        self.explored_entities.setdefault(uri, None)

    @property
    def token_estimate(self) -> int:
        return sum(c.token_estimate for c in self.tool_calls)

    def summary(self, labels=None, max_items: int = 40) -> str:
        """Status block injected into every LLM turn."""
        labels = labels or {}

        def fmt(uris):
            items = [f"{labels.get(u, u)} <{u}>" for u in list(uris)[:max_items]]
            more = len(uris) - len(items)
            return ", ".join(items) + (f" (+{more} more)" if more > 0 else "") if items else "none"

        collected = ", ".join(self.collected) or "none"
        return (f"Collected chunks ({len(self.collected)}): {collected}\n"
                f"Explored entities ({len(self.explored_entities)}): {fmt(self.explored_entities)}\n"
                f"Frontier ({len(self.frontier)}): {fmt(self.frontier)}")


def _result_ids(tool, result):
    if isinstance(result, str):
        return []
    if tool in ("entity_search", "expand_neighbors", "get_chunks_for_entity", "vector_search",
                "rerank_evidence"):
        return [row[0] for row in result]
    return []


class ToolRuntime:
    """Executes tools against a knowledge base and logs one ``ToolCall`` per execution.

    Tool failures come back as ``"ERROR: ..."`` strings instead of exceptions so
    an exploration loop can keep going.
    """

    def __init__(self, kb, state: ExplorationState | None = None, gateway=None,
                 n_seed: int = 10, clock=time.perf_counter):
        self.kb = kb
        self.state = state or ExplorationState()
        self.gateway = gateway
        self.n_seed = n_seed
        self.clock = clock
        self.gateway_calls = 0

    def execute(self, tool: str, args: dict | None = None):
        args = dict(args or {})
        t0 = self.clock()
        if not validate_action(tool, args):
            result = f"{ERROR_PREFIX}invalid call {tool}({canonical_json(args)})"
        else:
            result = getattr(self, f"_{tool}")(**args)
        wall_ms = int(round((self.clock() - t0) * 1000))
        payload = canonical_json(result)
        self.state.tool_calls.append(ToolCall(
            turn=self.state.turn,
            tool=tool,
            args=args,
            result_digest=hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16],
            token_estimate=estimate_tokens(canonical_json(args) + payload),
            wall_ms=wall_ms,
            result_ids=_result_ids(tool, result),
            error=isinstance(result, str) and result.startswith(ERROR_PREFIX),
        ))
        return result

    def _preview(self, chunk_id):
        return self.kb.chunks[chunk_id].text[:PREVIEW_CHARS]

    def _missing_chunks(self, ids):
        return [c for c in ids if c not in self.kb.chunks]

    def _entity_search(self, query):
        hits = entity_search(query, self.kb.graph, self.n_seed)
        self.state.add_frontier(u for u, _, _ in hits)
        return hits

    def _get_chunks_for_entity(self, uri):
        if uri not in self.kb.graph.entities:
            return f"{ERROR_PREFIX}unknown entity {uri}"
        self.state.mark_explored(uri)
        return [(cid, self._preview(cid)) for cid in self.kb.graph.chunks_for_entity(uri)]

    def _vector_search(self, query, k=10):
        q = self.kb.embed_query(query)
        return [(cid, sim, self._preview(cid)) for cid, sim in self.kb.index.search_top_k(q, k)]

    def _expand_neighbors(self, uri):
        if uri not in self.kb.graph.entities:
            return f"{ERROR_PREFIX}unknown entity {uri}"
        neighbors = self.kb.graph.co_mention_neighbors(uri)
        self.state.add_frontier(n for n, _, _ in neighbors)
        return neighbors

    def _read_chunk(self, id):
        if id not in self.kb.chunks:
            return f"{ERROR_PREFIX}unknown chunk {id}"
        graph = self.kb.graph
        return {
            "chunk_id": id,
            "text": self.kb.chunks[id].text,
            "entities": [(u, graph.entities[u].label) for u in graph.entities_for_chunk(id)],
            "doc_id": graph.chunk_of[id],
        }

    def _collect_chunk(self, id, relevance=""):
        if id not in self.kb.chunks:
            return f"{ERROR_PREFIX}unknown chunk {id}"
        self.state.collected[id] = relevance
        return f"collected {id} ({len(self.state.collected)} chunks collected)"

    def _rerank_evidence(self, question):
        if not self.state.collected:
            return []
        sims = self.kb.index.similarities(self.kb.embed_query(question))
        return sorted(((c, sims[c]) for c in self.state.collected), key=lambda r: (-r[1], r[0]))

    def _oneshot(self, prompt):
        if self.gateway is None:
            return f"{ERROR_PREFIX}no LLM gateway configured"
        self.gateway_calls += 1
        try:
            return self.gateway.oneshot(prompt)
        except GatewayError as exc:
            return f"{ERROR_PREFIX}{exc}"

    def _passages(self, ids):
        return "\n\n".join(f"[{cid}] {self.kb.chunks[cid].text}" for cid in ids)

    def _sub_query(self, question, chunk_ids):
        if not chunk_ids:
            return f"{ERROR_PREFIX}sub_query needs at least one chunk id"
        missing = self._missing_chunks(chunk_ids)
        if missing:
            return f"{ERROR_PREFIX}unknown chunk {missing[0]}"
        return self._oneshot(sub_query_prompt(question, self._passages(chunk_ids)))

    def _summarize_chunks(self, ids, focus):
        if not ids:
            return f"{ERROR_PREFIX}summarize_chunks needs at least one chunk id"
        missing = self._missing_chunks(ids)
        if missing:
            return f"{ERROR_PREFIX}unknown chunk {missing[0]}"
        return self._oneshot(summarize_prompt(focus, self._passages(ids)))


def sub_query_prompt(question: str, passages: str) -> str:
    return ("Answer the sub-question using only the passages below. Be brief.\n\n"
            f"Sub-question: {question}\n\nPassages:\n{passages}")


def summarize_prompt(focus: str, passages: str) -> str:
    return ("Summarize the passages below, keeping only what bears on the focus.\n\n"
            f"Focus: {focus}\n\nPassages:\n{passages}")


def write_trace(path, header: dict, state: ExplorationState, summary: dict, events=()) -> None:
    """JSONL: header, tool calls (interleaved with turn events), terminal summary."""
    records = [{"type": "header", **header}]
    calls = [{"type": "tool_call", **asdict(c)} for c in state.tool_calls]
    turn_events = [{"type": "turn", **e} for e in events]
    # turn events precede the tool calls they caused
    merged = sorted(turn_events + calls, key=lambda r: (r["turn"], r["type"] == "tool_call"))
    records.extend(merged)
    records.append({"type": "summary", **summary})
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def read_trace(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
