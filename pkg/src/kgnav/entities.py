"""Typed entity mentions, the label index and deterministic entity search."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from urllib.parse import quote

from .errors import DataValidationError

ENTITY_TYPES = ("PERSON", "ORG", "GPE", "LOC")

FUZZY_THRESHOLD = 90
FUZZY_TOP_K = 20
MIN_EXACT_HITS = 3

_TOKEN = re.compile(r"[^\W_]+(?:['’\-][^\W_]+)*")
_WS = re.compile(r"\s+")
_BLANK_LINE = re.compile(r"\n[^\S\n]*\n")


@dataclass(frozen=True)
class Entity:
    entity_uri: str
    label: str
    etype: str
    chunk_count: int = 0


@dataclass(frozen=True)
class MentionSpan:
    doc_id: str
    start_char: int
    end_char: int
    label: str
    etype: str


def normalize_label(text: str) -> str:
    return _WS.sub(" ", text).strip().lower()


def entity_uri(label: str, etype: str) -> str:
    return f"ent/{etype}/{quote(normalize_label(label), safe='')}"


class LabelIndex(dict):
    """normalized label -> set of entity URIs."""

    def add(self, label: str, uri: str) -> None:
        self.setdefault(normalize_label(label), set()).add(uri)

    def lookup(self, label: str) -> set[str]:
        return self.get(normalize_label(label), set())


def _capitalized_runs(text: str):
    run = []
    for m in _TOKEN.finditer(text):
        tok = m.group()
        if tok[0].isupper():
            if run:
                gap = text[run[-1].end():m.start()]
                if gap.isspace() and not _BLANK_LINE.search(gap):
                    run.append(m)
                    continue
                yield run
            run = [m]
        elif run:
            yield run
            run = []
    if run:
        yield run


def extract_entities_builtin(text: str, gazetteer: dict[str, str] | None = None,
                             doc_id: str = "") -> list[MentionSpan]:
    """Maximal runs of capitalized tokens, typed by gazetteer lookup (default PERSON).

    Offsets are relative to ``text``. A trailing possessive ``'s`` is dropped.
    """
    gaz = {normalize_label(k): v for k, v in (gazetteer or {}).items()}
    spans = []
    for run in _capitalized_runs(text):
        start, end = run[0].start(), run[-1].end()
        if text[end - 2:end] in ("'s", "’s") and end - 2 > start:
            end -= 2
        label = text[start:end]
        spans.append(MentionSpan(doc_id, start, end, label, gaz.get(normalize_label(label), "PERSON")))
    return spans


def load_gazetteer(path: str | Path) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            gaz = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"{path}: gazetteer is not valid JSON ({exc})") from exc
    if not isinstance(gaz, dict):
        raise DataValidationError(f"{path}: gazetteer must be a flat JSON object")
    for label, etype in gaz.items():
        if etype not in ENTITY_TYPES:
            raise DataValidationError(f"{path}: unknown entity type {etype!r} for {label!r}")
    return gaz


def load_annotations(path: str | Path, docs) -> list[MentionSpan]:
    """Read sidecar NER annotations and check every span against the corpus text."""
    texts = {d.doc_id: d.text for d in docs}
    spans = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc_id, start, end = obj["doc_id"], int(obj["start_char"]), int(obj["end_char"])
                label, etype = obj["label"], obj["etype"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataValidationError(f"{path}:{lineno}: malformed annotation ({exc})") from exc
            if etype not in ENTITY_TYPES:
                raise DataValidationError(f"{path}:{lineno}: unknown entity type {etype!r}")
            if doc_id not in texts:
                raise DataValidationError(f"{path}:{lineno}: unknown doc_id {doc_id!r}")
            if not 0 <= start < end or texts[doc_id][start:end] != label:
                raise DataValidationError(
                    f"{path}:{lineno}: span {doc_id}[{start}:{end}] does not match label {label!r}")
            spans.append(MentionSpan(doc_id, start, end, label, etype))
    return spans


def levenshtein(a: str, b: str, limit: int | None = None) -> int:
    """Unit-cost edit distance; returns ``limit + 1`` early once it must exceed ``limit``."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        if limit is not None and min(cur) > limit:
            return limit + 1
        prev = cur
    return prev[-1]


@lru_cache(maxsize=65536)
def _partial_score_normalized(a: str, b: str) -> int:
    if not a or not b:
        return 0
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    n = len(short)
    best = n
    for i in range(len(long_) - n + 1):
        d = levenshtein(short, long_[i:i + n], limit=best - 1 if best else 0)
        if d < best:
            best = d
            if best == 0:
                break
    # integer round-half-up of 100 * (n - best) / n
    return (200 * (n - best) + n) // (2 * n)


def partial_fuzzy_score(a: str, b: str) -> int:
    """Best windowed similarity in [0, 100] of the shorter string against the longer."""
    return _partial_score_normalized(normalize_label(a), normalize_label(b))


def entity_search(question: str, graph, n_seed: int = 10) -> list[tuple[str, str, int]]:
    """Map a question to seed entities: exact label lookup, fuzzy fallback, popularity sort."""
    keys = list(dict.fromkeys(
        normalize_label(s.label) for s in extract_entities_builtin(question)))
    keys = [k for k in keys if k]
    entities = graph.entities

    found: set[str] = set()
    for key in keys:
        found |= graph.label_index.get(key, set())

    if len(found) < MIN_EXACT_HITS:
        for key in keys:
            matches = []
            for norm, uris in graph.label_index.items():
                score = _partial_score_normalized(key, norm)
                if score >= FUZZY_THRESHOLD:
                    matches.extend((score, uri) for uri in uris)
            matches.sort(key=lambda m: (-m[0], -entities[m[1]].chunk_count,
                                        normalize_label(entities[m[1]].label), m[1]))
            found.update(uri for _, uri in matches[:FUZZY_TOP_K])

    ranked = sorted(found, key=lambda u: (-entities[u].chunk_count,
                                          normalize_label(entities[u].label), u))
    return [(u, entities[u].label, entities[u].chunk_count) for u in ranked[:n_seed]]
