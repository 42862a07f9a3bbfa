"""Provider-agnostic LLM boundary: turn requests in, tool actions or final text out."""

from __future__ import annotations

import hashlib
import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import DataValidationError, GatewayError


@dataclass(frozen=True)
class Action:
    tool: str
    args: dict

    def key(self) -> str:
        return self.tool + json.dumps(self.args, sort_keys=True, ensure_ascii=False)

    def to_dict(self) -> dict:
        return {"tool": self.tool, "args": self.args}


@dataclass
class TurnRequest:
    system_prompt: str
    question: str
    state_summary: str
    history: list = field(default_factory=list)
    tool_schemas: list = field(default_factory=list)
    turn: int = 1

    def to_wire(self, options: dict | None = None) -> dict:
        return {
            "mode": "turn",
            "system": self.system_prompt,
            "question": self.question,
            "state_summary": self.state_summary,
            "history": self.history,
            "tools": self.tool_schemas,
            "turn": self.turn,
            "options": options or {},
        }


@dataclass
class TurnResponse:
    """Either ``actions`` or ``final_text``; no actions and no text marks a malformed reply."""

    actions: list = field(default_factory=list)
    final_text: str | None = None
    dropped: int = 0

    @property
    def is_final(self) -> bool:
        return self.final_text is not None

    def to_dict(self) -> dict:
        if self.is_final:
            return {"final": self.final_text}
        return {"actions": [a.to_dict() for a in self.actions]}


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def parse_turn_response(obj, tool_names=None) -> TurnResponse:
    """Decode the wire reply; unknown tools and malformed entries are dropped."""
    if not isinstance(obj, dict):
        return TurnResponse(dropped=1)
    if isinstance(obj.get("final"), str):
        return TurnResponse(final_text=obj["final"])
    raw = obj.get("actions")
    if not isinstance(raw, list):
        return TurnResponse(dropped=1)
    actions, dropped = [], 0
    for item in raw:
        ok = (isinstance(item, dict) and isinstance(item.get("tool"), str)
              and isinstance(item.get("args", {}), dict)
              and (tool_names is None or item["tool"] in tool_names))
        if ok:
            actions.append(Action(item["tool"], dict(item.get("args", {}))))
        else:
            dropped += 1
    return TurnResponse(actions=actions, dropped=dropped)


def default_system_prompt() -> str:
    return resources.files("kgnav").joinpath("resources/system_prompt.txt").read_text(encoding="utf-8")


class ScriptedGateway:
    """Replays canned responses, making an LLM-driven run a pure function of its script.

    Script JSON::

        {"turns": [<response>, ...],                 # default, indexed by turn - 1
         "by_question": {"<question>": [<response>, ...]},
         "oneshot": {"<sha256 of prompt>": "<text>"}}

    where ``<response>`` is ``{"actions": [{"tool": ..., "args": {...}}]}`` or
    ``{"final": "..."}``. A turn list may also be given as ``{"<turn>": <response>}``.
    """

    def __init__(self, turns=None, by_question=None, oneshot=None):
        self.turns = self._as_mapping(turns)
        self.by_question = {q: self._as_mapping(t) for q, t in (by_question or {}).items()}
        self.oneshot_replies = dict(oneshot or {})

    @staticmethod
    def _as_mapping(turns) -> dict:
        if isinstance(turns, dict):
            try:
                return {int(k): v for k, v in turns.items()}
            except ValueError as exc:
                raise DataValidationError("script turn keys must be integers") from exc
        return {i: r for i, r in enumerate(turns or [], start=1)}

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedGateway":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"{path}: script is not valid JSON") from exc
        if not isinstance(data, dict):
            raise DataValidationError(f"{path}: script must be a JSON object")
        unknown = set(data) - {"turns", "by_question", "oneshot"}
        if unknown:
            raise DataValidationError(f"{path}: unknown script keys {sorted(unknown)}")
        return cls(data.get("turns"), data.get("by_question"), data.get("oneshot"))

    def turn(self, req: TurnRequest) -> TurnResponse:
        script = self.by_question.get(req.question, self.turns)
        if req.turn not in script:
            raise GatewayError(f"script has no response for turn {req.turn}")
        return parse_turn_response(script[req.turn])

    def oneshot(self, prompt: str) -> str:
        digest = prompt_digest(prompt)
        if digest not in self.oneshot_replies:
            raise GatewayError(f"script has no one-shot reply for prompt digest {digest[:12]}")
        return self.oneshot_replies[digest]


class HttpGateway:
    """JSON-over-HTTP adapter.

    Turn requests are posted as ``TurnRequest.to_wire()``; the reply is
    ``{"actions": [...]}`` or ``{"final": "..."}``. One-shot calls post
    ``{"mode": "oneshot", "prompt": ...}`` and expect ``{"text": ...}``.
    """

    def __init__(self, url: str, api_key: str | None = None, timeout: float = 120.0,
                 options: dict | None = None, tool_names=None):
        self.url = url
        self.api_key = api_key
        self.timeout = timeout
        self.options = {"temperature": 0.0, **(options or {})}
        self.tool_names = tool_names

    @classmethod
    def from_env(cls, **kwargs) -> "HttpGateway":
        url = os.environ.get("LLM_URL")
        if not url:
            raise GatewayError("LLM_URL is not set")
        return cls(url, api_key=os.environ.get("LLM_API_KEY"), **kwargs)

    def _post(self, payload: dict):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.url, data=json.dumps(payload).encode("utf-8"), headers=headers)
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                raw = resp.read().decode("utf-8")
        except urllib.error.HTTPError as exc:
            raise GatewayError(f"LLM endpoint returned HTTP {exc.code}", retriable=exc.code >= 500) from exc
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise GatewayError(f"LLM endpoint unreachable: {exc}", retriable=True) from exc
        try:
            return json.loads(raw)
        except json.JSONDecodeError:
            return None

    def turn(self, req: TurnRequest) -> TurnResponse:
        names = self.tool_names or {t["name"] for t in req.tool_schemas}
        return parse_turn_response(self._post(req.to_wire(self.options)), names)

    def oneshot(self, prompt: str) -> str:
        reply = self._post({"mode": "oneshot", "prompt": prompt, "options": self.options})
        if not isinstance(reply, dict) or not isinstance(reply.get("text"), str):
            raise GatewayError("malformed one-shot reply")
        return reply["text"]
