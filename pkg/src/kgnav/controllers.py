"""Retrieval controllers: vector-only, GraphRAG-local, heuristic BFS and LLM-driven exploration.

Every controller returns at most ``k`` chunks, ranked by score descending with
ties broken on ascending chunk id.
"""

from __future__ import annotations

import time
from collections import Counter, deque
from dataclasses import asdict, dataclass, field, fields

from .entities import entity_search, normalize_label
from .errors import GatewayError
from .gateway import Action, TurnRequest, default_system_prompt
from .tools import (TOOL_SCHEMAS, ExplorationState, ToolRuntime, canonical_json, estimate_tokens,
                    validate_action, write_trace)

CONTROLLERS = ("vector", "graphrag", "heuristic", "llm")


@dataclass(frozen=True)
class ControllerConfig:
    k: int = 20
    seed_k: int = 8
    expand_entities: int = 12
    per_entity_chunk_cap: int = 12
    bfs_depth: int = 3
    max_turns: int = 25
    stall_break_heuristic: int = 2
    stall_break_llm: int = 4
    boost: float = 0.10
    backfill_discount: float = 0.9
    n_seed: int = 10

    def __post_init__(self):
        for f in fields(self):
            if f.type == "int" and getattr(self, f.name) < 1:
                raise ValueError(f"{f.name} must be a positive integer")
        if not 0.0 <= self.boost < 1.0:
            raise ValueError("boost must lie in [0, 1)")
        if not 0.0 < self.backfill_discount <= 1.0:
            raise ValueError("backfill_discount must lie in (0, 1]")


@dataclass
class EvidenceList:
    controller: str
    items: list = field(default_factory=list)   # (chunk_id, score, source)
    token_estimate: int = 0
    wall_ms: int = 0
    gateway_turns: int = 0
    gateway_tokens: int = 0
    turns: int = 0
    stop_reason: str = ""
    error: str | None = None
    state: ExplorationState = field(default_factory=ExplorationState, repr=False)
    events: list = field(default_factory=list, repr=False)
    config: ControllerConfig | None = field(default=None, repr=False)

    @property
    def chunk_ids(self) -> list[str]:
        return [c for c, _, _ in self.items]

    def sources(self) -> dict[str, str]:
        return {c: s for c, _, s in self.items}

    def trace_summary(self) -> dict:
        return {
            "explored": list(self.state.explored_entities),
            "collected": list(self.state.collected),
            "turns": self.turns,
            "token_estimate": self.token_estimate,
            "wall_ms": self.wall_ms,
            "gateway_turns": self.gateway_turns,
            "gateway_tokens": self.gateway_tokens,
            "stop_reason": self.stop_reason,
            "error": self.error,
            "evidence": [list(i) for i in self.items],
        }

    def write_trace(self, path, question: str, qid: str | None = None, kb=None) -> None:
        header = {"controller": self.controller, "qid": qid, "question": question,
                  "config": asdict(self.config) if self.config else None}
        if kb is not None:
            header["seed_count"] = len(entity_search(question, kb.graph,
                                                     self.config.n_seed if self.config else 10))
            header["evidence_docs"] = len({kb.chunks[c].doc_id for c in self.chunk_ids})
        write_trace(path, header, self.state, self.trace_summary(), self.events)


def _rank(items):
    return sorted(items, key=lambda it: (-it[1], it[0]))


def _ms(clock, t0) -> int:
    return int(round((clock() - t0) * 1000))


def score_and_backfill(collected, question: str, kb, cfg: ControllerConfig, boost: float | None = None):
    """Score collected chunks with ``min(cosine + boost, 1)``; fill up to ``k`` from vector search.

    Backfilled chunks score ``backfill_discount * cosine``.
    """
    boost = cfg.boost if boost is None else boost
    q = kb.embed_query(question)
    sims = kb.index.similarities(q)
    items = [(cid, min(sims[cid] + boost, 1.0), "explored") for cid in collected]
    if len(items) < cfg.k:
        for cid, sim in kb.index.search_top_k(q, cfg.k - len(items), exclude=set(collected)):
            items.append((cid, cfg.backfill_discount * sim, "backfill"))
    return _rank(items)[:cfg.k]


def run_vector_only(question: str, kb, cfg: ControllerConfig = ControllerConfig(), clock=time.perf_counter):
    t0 = clock()
    hits = kb.index.search_top_k(kb.embed_query(question), cfg.k)
    items = [(cid, sim, "seed") for cid, sim in hits]
    return EvidenceList("vector", items, wall_ms=_ms(clock, t0), stop_reason="done", config=cfg)


def run_graphrag_local(question: str, kb, cfg: ControllerConfig = ControllerConfig(), clock=time.perf_counter):
    """Vector seeds, entity counting, capped one-hop expansion, merge, vector re-rank."""
    t0 = clock()
    graph = kb.graph
    q = kb.embed_query(question)
    sims = kb.index.similarities(q)

    seeds = [cid for cid, _ in kb.index.search_top_k(q, cfg.seed_k)]
    counts = Counter(u for cid in seeds for u in graph.chunk_entities[cid])
    top = sorted(counts, key=lambda u: (-counts[u], -graph.entities[u].chunk_count,
                                        normalize_label(graph.entities[u].label), u))
    expansion = []
    for uri in top[:cfg.expand_entities]:
        ranked = sorted(graph.entity_chunks[uri], key=lambda c: (-sims[c], c))
        expansion.extend(ranked[:cfg.per_entity_chunk_cap])

    seed_set = set(seeds)
    merged = dict.fromkeys(seeds + expansion)
    items = _rank((cid, sims[cid], "seed" if cid in seed_set else "expansion") for cid in merged)
    return EvidenceList("graphrag", items[:cfg.k], wall_ms=_ms(clock, t0), stop_reason="done", config=cfg)


def run_heuristic_rlm(question: str, kb, cfg: ControllerConfig = ControllerConfig(), clock=time.perf_counter):
    """Entity-seeded breadth-first traversal with stall-based early stop, then backfill."""
    t0 = clock()
    state = ExplorationState()
    runtime = ToolRuntime(kb, state, gateway=None, n_seed=cfg.n_seed, clock=clock)
    sims = kb.index.similarities(kb.embed_query(question))

    seeds = runtime.execute("entity_search", {"query": question})
    frontier = deque(uri for uri, _, _ in seeds)
    depth = {uri: 0 for uri in frontier}
    visited = set()
    stall = 0
    stop_reason = "frontier_empty"

    while frontier:
        if len(state.collected) >= cfg.k:
            stop_reason = "k_collected"
            break
        entity = frontier.popleft()
        if entity in visited:
            continue
        visited.add(entity)
        state.turn += 1
        new = 0
        for cid, _ in runtime.execute("get_chunks_for_entity", {"uri": entity}):
            if cid not in state.collected:
                new += 1
            state.collected[cid] = f"bfs depth {depth[entity]} score {sims[cid]:.4f}"
        if depth[entity] < cfg.bfs_depth:
            for n, _, _ in runtime.execute("expand_neighbors", {"uri": entity}):
                if n not in visited:
                    frontier.append(n)
                    depth[n] = depth[entity] + 1
        stall = stall + 1 if new == 0 else 0
        state.stall_counter = stall
        if stall >= cfg.stall_break_heuristic:
            stop_reason = "stalled"
            break

    items = score_and_backfill(state.collected, question, kb, cfg, boost=0.0)
    return EvidenceList("heuristic", items, token_estimate=state.token_estimate, wall_ms=_ms(clock, t0),
                        turns=state.turn, stop_reason=stop_reason, state=state, config=cfg)


def run_llm_rlm(question: str, kb, cfg: ControllerConfig = ControllerConfig(), gateway=None,
                system_prompt: str | None = None, clock=time.perf_counter):
    """LLM-proposed tool calls with state injection, invalid-turn fallback and stall stopping."""
    if gateway is None:
        raise ValueError("run_llm_rlm needs a gateway")
    t0 = clock()
    state = ExplorationState()
    runtime = ToolRuntime(kb, state, gateway=gateway, n_seed=cfg.n_seed, clock=clock)
    system_prompt = system_prompt or default_system_prompt()
    labels = {u: e.label for u, e in kb.graph.entities.items()}
    history, events = [], []
    stalled = 0
    gateway_turns = gateway_tokens = 0
    error = None
    stop_reason = "budget"
    turn = 0

    for turn in range(1, cfg.max_turns + 1):
        state.turn = turn
        before = len(state.collected)
        req = TurnRequest(system_prompt, question, state.summary(labels), list(history),
                          TOOL_SCHEMAS, turn)
        gateway_turns += 1
        try:
            resp = gateway.turn(req)
        except GatewayError as exc:
            events.append({"turn": turn, "status": "failed", "detail": str(exc)})
            gateway_tokens += estimate_tokens(canonical_json(req.to_wire()))
            if not exc.retriable:
                error, stop_reason = str(exc), "error"
                break
            resp = None
        if resp is not None:
            gateway_tokens += estimate_tokens(canonical_json(req.to_wire()) + canonical_json(resp.to_dict()))
            if resp.is_final:
                events.append({"turn": turn, "status": "final", "final_text": resp.final_text})
                stop_reason = "final"
                break
            actions, seen = [], set()
            for a in resp.actions:
                if validate_action(a.tool, a.args) and a.key() not in seen:
                    seen.add(a.key())
                    actions.append(a)
            fallback = not actions
            if fallback:
                actions = [Action("vector_search", {"query": question, "k": cfg.k})]
            events.append({"turn": turn, "status": "actions", "proposed": len(resp.actions) + resp.dropped,
                           "executed": len(actions), "fallback": fallback})
            history.append({"turn": turn, "calls": [
                {**a.to_dict(), "result": runtime.execute(a.tool, a.args)} for a in actions]})

        stalled = stalled + 1 if len(state.collected) == before else 0
        state.stall_counter = stalled
        if stalled >= cfg.stall_break_llm and turn >= cfg.max_turns / 2:
            stop_reason = "stalled"
            break

    items = score_and_backfill(state.collected, question, kb, cfg)
    return EvidenceList("llm", items, token_estimate=state.token_estimate, wall_ms=_ms(clock, t0),
                        gateway_turns=gateway_turns, gateway_tokens=gateway_tokens, turns=turn,
                        stop_reason=stop_reason, error=error, state=state, events=events, config=cfg)


def run_controller(name: str, question: str, kb, cfg: ControllerConfig = ControllerConfig(),
                   gateway=None, clock=time.perf_counter):
    if name == "vector":
        return run_vector_only(question, kb, cfg, clock)
    if name == "graphrag":
        return run_graphrag_local(question, kb, cfg, clock)
    if name == "heuristic":
        return run_heuristic_rlm(question, kb, cfg, clock)
    if name == "llm":
        return run_llm_rlm(question, kb, cfg, gateway, clock=clock)
    raise ValueError(f"unknown controller {name!r}; choose from {', '.join(CONTROLLERS)}")
