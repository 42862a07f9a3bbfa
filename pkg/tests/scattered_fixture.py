"""A 40-chunk corpus where most gold evidence is lexically invisible to the question.

Gold chunks g1 and g2 mention Ahab and Starbuck and share words with the
question. g3..g6 share no tokens with it and are reachable only through
Starbuck (one hop) and Queequeg (two hops). The 34 distractors share
question words but mention no entity.
"""

import random

from kgnav.corpus import Document
from kgnav.entities import entity_uri
from kgnav.gateway import ScriptedGateway
from kgnav.knowledge import KnowledgeBase
from kgnav.tools import sub_query_prompt
from kgnav.evaluation import Question
from kgnav.gateway import prompt_digest

QUESTION = "where did Ahab steer the ship during the storm?"

GOLD_TEXTS = {
    "g1": "Ahab and Starbuck argued as the ship turned into the storm, and Ahab said he would steer it himself.",
    "g2": "during the storm Ahab told Starbuck the ship must steer east toward the white whale.",
    "g3": "Starbuck quietly confided to Queequeg his plan for mutiny against their captain.",
    "g4": "Queequeg and Starbuck sharpened harpoons below deck one calm night.",
    "g5": "Queequeg carved a coffin from island timber and sang softly.",
    "g6": "Queequeg remembered his faraway home and its palm forests.",
}

_FILLER = ("rope sail deck wave wind crew mast salt rain cloud harbor anchor plank tide "
           "lantern barrel rigging hull compass horizon gull net oar").split()


def distractor_texts(n=34, seed=7):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        words = rng.sample(_FILLER, 8)
        out.append(f"the ship sailed on during the storm while the {words[0]} and {words[1]} "
                   f"strained, {words[2]} {words[3]} {words[4]}, where {words[5]} met {words[6]} "
                   f"and {words[7]} number {i}.")
    return out


def documents():
    docs = [Document(f"doc-{gid}", gid, text) for gid, text in GOLD_TEXTS.items()]
    docs += [Document(f"doc-x{i:02d}", f"x{i:02d}", t) for i, t in enumerate(distractor_texts())]
    return docs


def build_kb():
    return KnowledgeBase.build(documents())


def gold_chunks():
    return {f"doc-{gid}#c00000" for gid in GOLD_TEXTS}


def question():
    q = Question("q1", QUESTION, "ComplexReasoning", list(GOLD_TEXTS.values()))
    return q


AHAB = entity_uri("Ahab", "PERSON")
STARBUCK = entity_uri("Starbuck", "PERSON")
QUEEQUEG = entity_uri("Queequeg", "PERSON")


def phase_script(kb):
    """Scripted navigator following the discovery, expansion and verification phases."""
    cid = {gid: f"doc-{gid}#c00000" for gid in GOLD_TEXTS}
    verify_q = "what did Starbuck and Queequeg plan?"
    passages = "\n\n".join(f"[{c}] {kb.chunks[c].text}" for c in (cid["g3"], cid["g4"]))
    verify_digest = prompt_digest(sub_query_prompt(verify_q, passages))

    def act(tool, **args):
        return {"tool": tool, "args": args}

    turns = [
        {"actions": [act("entity_search", query=QUESTION)]},
        {"actions": [act("get_chunks_for_entity", uri=AHAB), act("read_chunk", id=cid["g1"])]},
        {"actions": [act("collect_chunk", id=cid["g1"], relevance="Ahab steering"),
                     act("collect_chunk", id=cid["g2"], relevance="storm course")]},
        {"actions": [act("expand_neighbors", uri=AHAB)]},
        {"actions": [act("get_chunks_for_entity", uri=STARBUCK),
                     act("collect_chunk", id=cid["g3"]), act("collect_chunk", id=cid["g4"])]},
        {"actions": [act("expand_neighbors", uri=STARBUCK), act("get_chunks_for_entity", uri=QUEEQUEG)]},
        {"actions": [act("collect_chunk", id=cid["g5"]), act("collect_chunk", id=cid["g6"])]},
        {"actions": [act("sub_query", question=verify_q, chunk_ids=[cid["g3"], cid["g4"]])]},
        {"final": "evidence collected"},
    ]
    return ScriptedGateway(turns, oneshot={verify_digest: "a mutiny against the captain"})
