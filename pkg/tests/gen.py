"""Random corpora and knowledge bases for property tests."""

import random

from kgnav.corpus import Document
from kgnav.entities import MentionSpan
from kgnav.knowledge import KnowledgeBase

LOWER = ("the a of and to in was he she it his her they ship sea wind rope wave night day "
         "old new long short cold dark light storm harbor voyage crew deck sail mast").split()


def random_words(rng, n):
    return " ".join(rng.choice(LOWER) for _ in range(n))


def random_document(rng, doc_id, max_paragraphs=6, max_len=600):
    paras = []
    for _ in range(rng.randint(1, max_paragraphs)):
        n = rng.choice([rng.randint(1, 60), rng.randint(100, 250), rng.randint(240, max_len)])
        paras.append(random_words(rng, n))
    sep = rng.choice(["\n\n", "\n \n", "\n\n\n"])
    return Document(doc_id, doc_id, sep.join(paras))


def name_pool(rng, n):
    syll = ["ka", "ro", "mi", "ta", "lo", "ve", "na", "si", "du", "be", "ar", "el"]
    names = set()
    while len(names) < n:
        w = "".join(rng.choice(syll) for _ in range(rng.randint(2, 3)))
        if rng.random() < 0.25:
            w += " " + "".join(rng.choice(syll) for _ in range(2)).capitalize()
        names.add(w.capitalize())
    return sorted(names)


def random_entity_corpus(rng, n_docs=8, n_names=20, chunk_paras=(1, 3), mentions=(0, 4)):
    """Single-chunk documents (short paragraphs) mentioning random names from a pool.

    Names are separated by lowercase words so each one is its own capitalized run.
    Returns (docs, spans) where spans are exact annotations.
    """
    names = name_pool(rng, n_names)
    docs, spans = [], []
    for i in range(n_docs):
        doc_id = f"d{i:03d}"
        parts, pos = [], 0
        for _ in range(rng.randint(*chunk_paras)):
            chosen = rng.sample(names, rng.randint(*mentions))
            for name in chosen:
                filler = random_words(rng, rng.randint(1, 5)) + " "
                parts.append(filler)
                pos += len(filler)
                spans.append(MentionSpan(doc_id, pos, pos + len(name), name, "PERSON"))
                parts.append(name)
                pos += len(name)
            tail = " " + random_words(rng, rng.randint(1, 5)) + " "
            parts.append(tail)
            pos += len(tail)
        docs.append(Document(doc_id, doc_id, "".join(parts)))
    return docs, spans, names


def random_kb(seed, **kw):
    rng = random.Random(seed)
    docs, spans, names = random_entity_corpus(rng, **kw)
    return KnowledgeBase.build(docs, spans=spans), names, rng
