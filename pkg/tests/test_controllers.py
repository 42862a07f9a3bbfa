import numpy as np
import pytest

from kgnav.controllers import (ControllerConfig, run_controller, run_graphrag_local, run_heuristic_rlm,
                               run_llm_rlm, run_vector_only, score_and_backfill)
from kgnav.corpus import Document
from kgnav.entities import entity_uri
from kgnav.errors import GatewayError
from kgnav.gateway import ScriptedGateway, TurnResponse
from kgnav.knowledge import KnowledgeBase
from kgnav.vectors import VectorIndex

from conftest import spans_for
from gen import random_kb

A = entity_uri("Alpha", "PERSON")
C1, C2, C3, C4 = (f"d{i}#c00000" for i in range(1, 5))
FROZEN = dict(clock=lambda: 0.0)


def check_evidence(ev, k):
    ids = ev.chunk_ids
    scores = [s for _, s, _ in ev.items]
    assert len(ids) <= k and len(set(ids)) == len(ids)
    assert scores == sorted(scores, reverse=True)
    assert all(0.0 <= s <= 1.0 for s in scores)


class FakeKB:
    """Minimal stand-in exposing only what the scoring stage reads."""

    def __init__(self, vectors, query):
        self.index = VectorIndex(len(query))
        for cid, v in vectors.items():
            self.index.add(cid, v)
        self.query = np.asarray(query, dtype=float)

    def embed_query(self, text):
        return self.query


def unit_with_cos(c, dim=4, axis=1):
    v = np.zeros(dim)
    v[0], v[axis] = c, np.sqrt(1 - c * c)
    return v


def test_score_cap_and_pure_backfill():
    kb = FakeKB({"c1": unit_with_cos(0.95), "c2": unit_with_cos(0.5, axis=2)}, [1, 0, 0, 0])
    cfg = ControllerConfig(k=2)
    items = score_and_backfill({"c1": ""}, "q", kb, cfg)
    assert items[0] == ("c1", 1.0, "explored")
    assert items[1][0] == "c2" and items[1][2] == "backfill"
    assert items[1][1] == pytest.approx(0.45)
    pure = score_and_backfill({}, "q", kb, cfg)
    assert [(c, src) for c, _, src in pure] == [("c1", "backfill"), ("c2", "backfill")]
    assert pure[0][1] == pytest.approx(0.9 * 0.95)


def test_collected_beats_equal_cosine():
    kb = FakeKB({"a": unit_with_cos(0.5, axis=1), "b": unit_with_cos(0.5, axis=2)}, [1, 0, 0, 0])
    items = score_and_backfill({"b": ""}, "q", kb, ControllerConfig(k=2))
    assert [c for c, _, _ in items] == ["b", "a"]
    assert items[0][1] == pytest.approx(0.6) and items[1][1] == pytest.approx(0.45)


def test_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig(k=0)
    with pytest.raises(ValueError):
        ControllerConfig(boost=1.0)
    with pytest.raises(ValueError):
        ControllerConfig(backfill_discount=0.0)


def test_vector_only(chain_kb):
    ev = run_vector_only(chain_kb.chunks[C3].text, chain_kb)
    assert len(ev.items) == 4 and ev.chunk_ids[0] == C3
    assert ev.items[0][1] == pytest.approx(1.0, abs=1e-6)
    q = chain_kb.embed_query("harbor")
    assert [(c, s) for c, s, _ in run_vector_only("harbor", chain_kb).items] == chain_kb.index.search_top_k(q, 20)


def test_graphrag_expansion_pulls_off_query_chunk():
    docs = [Document("d1", "t", "Orin sailed the red ship at dawn."),
            Document("d2", "t", "the red ship left the harbor at dawn."),
            Document("d3", "t", "Orin kept a journal of quiet thoughts."),
            Document("d4", "t", "a cat slept on a warm roof."),
            Document("d5", "t", "bread rises slowly in the oven.")]
    kb = KnowledgeBase.build(docs, spans=spans_for(docs, ["Orin"]))
    cfg = ControllerConfig(seed_k=1)
    ev = run_graphrag_local("red ship at dawn with Orin", kb, cfg)
    assert ev.sources() == {"d1#c00000": "seed", "d3#c00000": "expansion"}


def test_graphrag_without_entities_is_vector_seeds():
    docs = [Document(f"d{i}", "t", f"plain words number {i} and some more") for i in range(12)]
    kb = KnowledgeBase.build(docs, spans=[])
    ev = run_graphrag_local("words number 3", kb)
    seeds = kb.index.search_top_k(kb.embed_query("words number 3"), 8)
    assert [(c, s) for c, s, _ in ev.items] == seeds


def test_heuristic_chain_collects_gamma(chain_kb):
    ev = run_heuristic_rlm("What did Alpha do?", chain_kb)
    assert C3 in ev.state.collected
    assert ev.sources()[C3] == "explored"
    assert ev.gateway_turns == 0 and ev.gateway_tokens == 0
    assert {c.tool for c in ev.state.tool_calls} <= {"entity_search", "get_chunks_for_entity",
                                                     "expand_neighbors"}


def test_heuristic_zero_seeds_is_scaled_vector(chain_kb):
    q = "weather and tides near the harbor"
    heur = run_heuristic_rlm(q, chain_kb)
    vec = run_vector_only(q, chain_kb)
    assert heur.chunk_ids == vec.chunk_ids
    assert [s for _, s, _ in heur.items] == pytest.approx([0.9 * s for _, s, _ in vec.items])


def test_llm_collect_then_final(chain_kb):
    gw = ScriptedGateway([
        {"actions": [{"tool": "entity_search", "args": {"query": "Who met Beta?"}}]},
        {"actions": [{"tool": "get_chunks_for_entity", "args": {"uri": entity_uri("Beta", "PERSON")}},
                     {"tool": "collect_chunk", "args": {"id": C2, "relevance": "Beta travels"}}]},
        {"final": "done"},
    ])
    ev = run_llm_rlm("Who met Beta?", chain_kb, gateway=gw, **FROZEN)
    assert ev.stop_reason == "final" and ev.turns == 3
    cos = chain_kb.index.similarities(chain_kb.embed_query("Who met Beta?"))[C2]
    assert dict((c, (s, src)) for c, s, src in ev.items)[C2] == (pytest.approx(min(cos + 0.1, 1.0)), "explored")


def test_llm_invalid_actions_fall_back(chain_kb):
    bad = {"actions": [{"tool": "frobnicate", "args": {}}, {"tool": "read_chunk", "args": {"id": 5}}]}
    gw = ScriptedGateway([bad] * 25)
    ev = run_llm_rlm("harbor", chain_kb, gateway=gw, **FROZEN)
    assert all(e["fallback"] for e in ev.events)
    assert {c.tool for c in ev.state.tool_calls} == {"vector_search"}
    assert ev.stop_reason == "stalled" and ev.turns == 13
    vec = run_vector_only("harbor", chain_kb)
    assert ev.chunk_ids == vec.chunk_ids


def test_llm_dedups_within_turn_only(chain_kb):
    act = {"tool": "read_chunk", "args": {"id": C1}}
    gw = ScriptedGateway([{"actions": [act, act]}, {"actions": [act]}, {"final": "x"}])
    ev = run_llm_rlm("q", chain_kb, gateway=gw, **FROZEN)
    assert [c.turn for c in ev.state.tool_calls] == [1, 2]


class FlakyGateway:
    def __init__(self, fail_turns, retriable):
        self.fail_turns, self.retriable = fail_turns, retriable

    def turn(self, req):
        if req.turn in self.fail_turns:
            raise GatewayError("boom", retriable=self.retriable)
        if req.turn == 1:
            return TurnResponse(actions=[])
        return TurnResponse(final_text="done")

    def oneshot(self, prompt):
        raise GatewayError("no")


def test_llm_retriable_error_counts_as_turn(chain_kb):
    ev = run_llm_rlm("q", chain_kb, gateway=FlakyGateway({2}, True), **FROZEN)
    assert ev.turns == 3 and ev.gateway_turns == 3 and ev.stop_reason == "final"
    assert [e["status"] for e in ev.events] == ["actions", "failed", "final"]


def test_llm_hard_failure_aborts_with_backfill(chain_kb):
    ev = run_llm_rlm("q", chain_kb, gateway=FlakyGateway({2}, False), **FROZEN)
    assert ev.stop_reason == "error" and ev.error == "boom"
    assert len(ev.items) == 4


def test_llm_requires_gateway(chain_kb):
    with pytest.raises(ValueError):
        run_llm_rlm("q", chain_kb)
    with pytest.raises(ValueError):
        run_controller("nope", "q", chain_kb)


@pytest.mark.parametrize("name", ["vector", "graphrag", "heuristic"])
def test_budget_parity_on_random_kbs(name):
    for seed in range(5):
        kb, names, rng = random_kb(seed, n_docs=30)
        cfg = ControllerConfig(k=7)
        ev = run_controller(name, f"what about {names[0]} and {names[1]}", kb, cfg)
        check_evidence(ev, 7)
        assert len(ev.items) == 7


def test_estimators_roundtrip(chain_kb):
    from sklearn.base import clone
    from sklearn.exceptions import NotFittedError
    from kgnav.estimators import HeuristicRLMRetriever, LLMRLMRetriever, VectorOnlyRetriever

    est = VectorOnlyRetriever(k=2)
    with pytest.raises(NotFittedError):
        est.predict(["q"])
    assert clone(est).get_params()["k"] == 2
    assert est.fit(chain_kb).predict("treasure oak")[0][0] == C3
    docs = [(d.doc_id, d.title, d.text) for d in chain_kb.docs]
    heur = HeuristicRLMRetriever(k=3).fit(docs)
    assert len(heur.predict(["Where is Gamma?"])[0]) == 3
    with pytest.raises(TypeError):
        VectorOnlyRetriever().fit([1, 2])
    with pytest.raises(ValueError):
        LLMRLMRetriever().fit(chain_kb).predict(["q"])
    gw = ScriptedGateway([{"final": "x"}])
    assert LLMRLMRetriever(gateway=gw).fit(chain_kb).retrieve(["q"])[0].stop_reason == "final"
