"""Corpus loading and paragraph-aligned chunking."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import DataValidationError

_WORD = re.compile(r"\S+")
_PARAGRAPH_BREAK = re.compile(r"\n[^\S\n]*\n\s*")


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    start_char: int
    end_char: int
    word_count: int
    seq: int


def make_chunk_id(doc_id: str, seq: int) -> str:
    return f"{doc_id}#c{seq:05d}"


def load_corpus(path: str | Path) -> list[Document]:
    """Read a JSONL corpus (keys ``doc_id``, ``title``, ``text``) in file order."""
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataValidationError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DataValidationError(f"{path}:{lineno}: expected a JSON object")
            try:
                doc_id, title, text = obj["doc_id"], obj["title"], obj["text"]
            except KeyError as exc:
                raise DataValidationError(f"{path}:{lineno}: missing key {exc.args[0]!r}") from exc
            if not all(isinstance(v, str) for v in (doc_id, title, text)):
                raise DataValidationError(f"{path}:{lineno}: doc_id, title and text must be strings")
            if doc_id in seen:
                raise DataValidationError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
            if not text.split():
                raise DataValidationError(f"{path}:{lineno}: document {doc_id!r} has empty text")
            seen.add(doc_id)
            docs.append(Document(doc_id, title, text))
    return docs


def _paragraph_words(text: str) -> list[list[tuple[int, int]]]:
    """Word spans (start, end) grouped by blank-line-delimited paragraph."""
    paragraphs = []
    pos = 0
    for brk in _PARAGRAPH_BREAK.finditer(text):
        paragraphs.append((pos, brk.start()))
        pos = brk.end()
    paragraphs.append((pos, len(text)))
    out = []
    for start, end in paragraphs:
        words = [(m.start(), m.end()) for m in _WORD.finditer(text, start, end)]
        if words:
            out.append(words)
    return out


def chunk_document(doc: Document, max_words: int = 240, overlap_words: int = 40) -> list[Chunk]:
    """Split a document into paragraph-aligned chunks of at most ``max_words`` words.

    Whole paragraphs are packed greedily. A paragraph longer than the budget is
    cut into windows of ``max_words`` that overlap by ``overlap_words``; its
    last window stays open so following paragraphs can still pack into it.
    """
    if not max_words > overlap_words >= 0:
        raise ValueError("need max_words > overlap_words >= 0")

    pieces: list[list[tuple[int, int]]] = []
    current: list[tuple[int, int]] = []
    step = max_words - overlap_words

    for para in _paragraph_words(doc.text):
        if len(para) <= max_words:
            if current and len(current) + len(para) > max_words:
                pieces.append(current)
                current = []
            current = current + para
            continue
        if current:
            pieces.append(current)
        start = 0
        while start + max_words < len(para):
            pieces.append(para[start:start + max_words])
            start += step
        current = para[start:]

    if current:
        pieces.append(current)

    chunks = []
    for seq, words in enumerate(pieces):
        s, e = words[0][0], words[-1][1]
        chunks.append(Chunk(
            chunk_id=make_chunk_id(doc.doc_id, seq),
            doc_id=doc.doc_id,
            text=doc.text[s:e],
            start_char=s,
            end_char=e,
            word_count=len(words),
            seq=seq,
        ))
    return chunks


def chunk_corpus(docs, max_words: int = 240, overlap_words: int = 40) -> list[Chunk]:
    return [c for doc in docs for c in chunk_document(doc, max_words, overlap_words)]
