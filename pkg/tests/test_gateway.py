import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from kgnav.errors import DataValidationError, GatewayError
from kgnav.gateway import (Action, HttpGateway, ScriptedGateway, TurnRequest, default_system_prompt,
                           parse_turn_response, prompt_digest)
from kgnav.tools import TOOL_NAMES, TOOL_SCHEMAS
from kgnav.vectors import HttpEmbedder


def req(turn=1, question="q"):
    return TurnRequest("sys", question, "state", [], TOOL_SCHEMAS, turn)


def test_scripted_turns():
    gw = ScriptedGateway([{"actions": [{"tool": "vector_search", "args": {"query": "x", "k": 5}}]},
                          {"final": "done"}])
    assert gw.turn(req(1)).actions == [Action("vector_search", {"query": "x", "k": 5})]
    assert gw.turn(req(2)).final_text == "done"
    with pytest.raises(GatewayError):
        gw.turn(req(3))


def test_scripted_mapping_and_by_question(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"turns": {"2": {"final": "late"}},
                             "by_question": {"special": [{"final": "q-specific"}]}}))
    gw = ScriptedGateway.from_file(p)
    assert gw.turn(req(2)).final_text == "late"
    assert gw.turn(req(1, "special")).final_text == "q-specific"
    p.write_text(json.dumps({"turns": [], "bogus": 1}))
    with pytest.raises(DataValidationError):
        ScriptedGateway.from_file(p)


def test_scripted_oneshot():
    gw = ScriptedGateway(oneshot={prompt_digest("is it?"): "yes"})
    assert gw.oneshot("is it?") == "yes"
    with pytest.raises(GatewayError):
        gw.oneshot("other")


def test_parse_drops_unknown_and_malformed():
    resp = parse_turn_response({"actions": [{"tool": "frobnicate", "args": {}},
                                            {"tool": "read_chunk", "args": {"id": "c"}}, "junk"]},
                               TOOL_NAMES)
    assert resp.actions == [Action("read_chunk", {"id": "c"})] and resp.dropped == 2
    assert parse_turn_response("nonsense").actions == []
    assert parse_turn_response({"final": "x"}).is_final


def test_system_prompt_resource():
    text = default_system_prompt()
    assert "entity" in text and text.startswith("version: ")
    assert all(name in text for name in TOOL_NAMES)
    assert "not the original question verbatim" in text
    assert default_system_prompt() == text


class _Handler(BaseHTTPRequestHandler):
    routes = {}

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.server.seen.append((self.path, body, self.headers.get("Authorization")))
        status, reply = self.routes[self.path](body)
        data = reply if isinstance(reply, bytes) else json.dumps(reply).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub():
    _Handler.routes = {
        "/turn": lambda b: (200, {"actions": [{"tool": "frobnicate", "args": {}}]}
                            if b["mode"] == "turn" else {"text": "echo: " + b["prompt"]}),
        "/final": lambda b: (200, {"final": "done"}),
        "/broken": lambda b: (503, {"error": "down"}),
        "/garbage": lambda b: (200, b"not json"),
        "/embed": lambda b: (200, {"embeddings": [[float(len(t)), 1.0, 0.0, 0.0] for t in b["texts"]]}),
        "/embed-bad": lambda b: (200, {"embeddings": [[1.0, 2.0]]}),
    }
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    server.seen = []
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    yield server
    server.shutdown()


def url(server, path):
    return f"http://127.0.0.1:{server.server_address[1]}{path}"


def test_http_gateway(stub):
    gw = HttpGateway(url(stub, "/turn"), api_key="k")
    resp = gw.turn(req())
    assert resp.actions == [] and resp.dropped == 1
    path, body, auth = stub.seen[0]
    assert body["mode"] == "turn" and body["options"]["temperature"] == 0.0 and auth == "Bearer k"
    assert {"system", "question", "state_summary", "history", "tools"} <= set(body)
    assert gw.oneshot("hi") == "echo: hi"
    assert HttpGateway(url(stub, "/final")).turn(req()).final_text == "done"
    assert HttpGateway(url(stub, "/garbage")).turn(req()).actions == []
    with pytest.raises(GatewayError) as exc:
        HttpGateway(url(stub, "/broken")).turn(req())
    assert exc.value.retriable
    with pytest.raises(GatewayError) as exc:
        HttpGateway("http://127.0.0.1:9/none", timeout=2).turn(req())
    assert exc.value.retriable


def test_http_gateway_from_env(monkeypatch):
    monkeypatch.delenv("LLM_URL", raising=False)
    with pytest.raises(GatewayError):
        HttpGateway.from_env()
    monkeypatch.setenv("LLM_URL", "http://x")
    monkeypatch.setenv("LLM_API_KEY", "secret")
    gw = HttpGateway.from_env()
    assert gw.url == "http://x" and gw.api_key == "secret"


def test_http_embedder(stub):
    emb = HttpEmbedder(url(stub, "/embed"), dim=4, batch_size=2)
    out = emb.embed(["a", "abc", "abcd"])
    assert out.shape == (3, 4)
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0)
    assert len(stub.seen) == 2
    with pytest.raises(ValueError):
        HttpEmbedder(url(stub, "/embed-bad"), dim=4).embed(["x"])
    with pytest.raises(RuntimeError):
        HttpEmbedder("http://127.0.0.1:9/none", dim=4, timeout=2).embed(["x"])
