"""scikit-learn style wrappers: ``fit`` builds (or adopts) a knowledge base, ``predict`` retrieves."""

from __future__ import annotations

from dataclasses import fields

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .controllers import ControllerConfig, run_controller
from .corpus import Document
from .knowledge import KnowledgeBase


def check_documents(X):
    """Accept a list of ``Document`` or ``(doc_id, title, text)`` tuples; return Documents."""
    if isinstance(X, (str, bytes)) or not hasattr(X, "__iter__"):
        raise TypeError("expected an iterable of documents")
    docs = []
    for item in X:
        if isinstance(item, Document):
            docs.append(item)
        elif isinstance(item, (tuple, list)) and len(item) == 3:
            docs.append(Document(*item))
        else:
            raise TypeError(f"cannot interpret {type(item).__name__} as a document")
    if not docs:
        raise ValueError("no documents given")
    return docs


def check_questions(questions) -> list[str]:
    if isinstance(questions, str):
        return [questions]
    out = list(questions)
    bad = [q for q in out if not isinstance(q, str)]
    if bad:
        raise TypeError("questions must be strings")
    return out


def check_is_fitted(est) -> None:
    if getattr(est, "kb_", None) is None:
        raise NotFittedError(f"{type(est).__name__} is not fitted; call fit first")


class BaseRetriever(BaseEstimator):
    """Shared fit/predict plumbing. Hyperparameters mirror ``ControllerConfig``."""

    controller = ""

    def __init__(self, k=20, seed_k=8, expand_entities=12, per_entity_chunk_cap=12, bfs_depth=3,
                 max_turns=25, stall_break_heuristic=2, stall_break_llm=4, boost=0.10,
                 backfill_discount=0.9, n_seed=10, embedder=None, gazetteer=None):
        self.k = k
        self.seed_k = seed_k
        self.expand_entities = expand_entities
        self.per_entity_chunk_cap = per_entity_chunk_cap
        self.bfs_depth = bfs_depth
        self.max_turns = max_turns
        self.stall_break_heuristic = stall_break_heuristic
        self.stall_break_llm = stall_break_llm
        self.boost = boost
        self.backfill_discount = backfill_discount
        self.n_seed = n_seed
        self.embedder = embedder
        self.gazetteer = gazetteer

    def config(self) -> ControllerConfig:
        return ControllerConfig(**{f.name: getattr(self, f.name) for f in fields(ControllerConfig)})

    def fit(self, X, y=None):
        """``X`` is a ``KnowledgeBase`` or an iterable of documents."""
        self.config_ = self.config()
        if isinstance(X, KnowledgeBase):
            self.kb_ = X
        else:
            self.kb_ = KnowledgeBase.build(check_documents(X), gazetteer=self.gazetteer,
                                           embedder=self.embedder)
        return self

    def _run(self, question):
        return run_controller(self.controller, question, self.kb_, self.config_)

    def retrieve(self, questions):
        """Full ``EvidenceList`` per question."""
        check_is_fitted(self)
        return [self._run(q) for q in check_questions(questions)]

    def predict(self, questions):
        """Ranked chunk ids per question."""
        return [ev.chunk_ids for ev in self.retrieve(questions)]


class VectorOnlyRetriever(BaseRetriever):
    controller = "vector"


class GraphRAGLocalRetriever(BaseRetriever):
    controller = "graphrag"


class HeuristicRLMRetriever(BaseRetriever):
    controller = "heuristic"


class LLMRLMRetriever(BaseRetriever):
    controller = "llm"

    def __init__(self, gateway=None, k=20, seed_k=8, expand_entities=12, per_entity_chunk_cap=12,
                 bfs_depth=3, max_turns=25, stall_break_heuristic=2, stall_break_llm=4, boost=0.10,
                 backfill_discount=0.9, n_seed=10, embedder=None, gazetteer=None):
        super().__init__(k=k, seed_k=seed_k, expand_entities=expand_entities,
                         per_entity_chunk_cap=per_entity_chunk_cap, bfs_depth=bfs_depth,
                         max_turns=max_turns, stall_break_heuristic=stall_break_heuristic,
                         stall_break_llm=stall_break_llm, boost=boost,
                         backfill_discount=backfill_discount, n_seed=n_seed,
                         embedder=embedder, gazetteer=gazetteer)
        self.gateway = gateway

    def _run(self, question):
        if self.gateway is None:
            raise ValueError("LLMRLMRetriever needs a gateway")
        return run_controller("llm", question, self.kb_, self.config_, gateway=self.gateway)
