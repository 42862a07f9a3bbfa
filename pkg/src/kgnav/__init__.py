"""Entity-graph navigation for multi-hop evidence retrieval."""

from .controllers import (CONTROLLERS, ControllerConfig, EvidenceList, run_controller,
                          run_graphrag_local, run_heuristic_rlm, run_llm_rlm, run_vector_only,
                          score_and_backfill)
from .corpus import Chunk, Document, chunk_corpus, chunk_document, load_corpus
from .entities import (Entity, MentionSpan, entity_search, extract_entities_builtin,
                       partial_fuzzy_score)
from .errors import DataValidationError, GatewayError, KgnavError, NotFoundError
from .estimators import (GraphRAGLocalRetriever, HeuristicRLMRetriever, LLMRLMRetriever,
                         VectorOnlyRetriever)
from .evaluation import (compute_kg_health, load_questions, map_evidence_to_chunks,
                         paired_bootstrap, prf1, run_eval, scatter_bin)
from .gateway import HttpGateway, ScriptedGateway
from .graph import MentionGraph, build_graph, export_triples
from .knowledge import KnowledgeBase
from .tools import ToolRuntime
from .vectors import ReferenceEmbedder, VectorIndex, cosine01, embed_reference

__version__ = "0.1.0"

__all__ = [
    "build_graph",
    "Chunk",
    "chunk_corpus",
    "chunk_document",
    "compute_kg_health",
    "ControllerConfig",
    "CONTROLLERS",
    "cosine01",
    "DataValidationError",
    "Document",
    "embed_reference",
    "Entity",
    "entity_search",
    "EvidenceList",
    "export_triples",
    "extract_entities_builtin",
    "GatewayError",
    "GraphRAGLocalRetriever",
    "HeuristicRLMRetriever",
    "HttpGateway",
    "KgnavError",
    "KnowledgeBase",
    "LLMRLMRetriever",
    "load_corpus",
    "load_questions",
    "map_evidence_to_chunks",
    "MentionGraph",
    "MentionSpan",
    "NotFoundError",
    "paired_bootstrap",
    "partial_fuzzy_score",
    "prf1",
    "ReferenceEmbedder",
    "run_controller",
    "run_eval",
    "run_graphrag_local",
    "run_heuristic_rlm",
    "run_llm_rlm",
    "run_vector_only",
    "scatter_bin",
    "score_and_backfill",
    "ScriptedGateway",
    "ToolRuntime",
    "VectorIndex",
    "VectorOnlyRetriever",
]
