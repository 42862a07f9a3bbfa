"""Command line entry point: build, ask, eval, diagnose, export-triples.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines (``#`` starts a comment), then command-line flags. Every
config key has a flag of the same name with dashes, e.g. ``bfs_depth`` and
``--bfs-depth``.

Exit codes: 0 ok, 1 usage, 2 data validation, 3 runtime.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .controllers import CONTROLLERS, ControllerConfig, run_controller
from .corpus import load_corpus
from .entities import load_annotations, load_gazetteer
from .errors import DataValidationError, GatewayError, KgnavError, NotFoundError
from .evaluation import (compute_kg_health, failure_categories, health_to_dict, load_questions,
                         load_records, load_traces, map_gold, run_eval)
from .gateway import HttpGateway, ScriptedGateway
from .graph import export_triples
from .knowledge import KnowledgeBase, extract_corpus_mentions
from .vectors import HttpEmbedder, ReferenceEmbedder

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("kgnav")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    corpus: str | None = None
    questions: str | None = None
    annotations: str | None = None
    gazetteer: str | None = None
    script: str | None = None
    snapshot: str | None = None
    out: str | None = None
    extractor: str = "builtin"
    embedder: str = "reference"
    embedder_url: str | None = None
    embedder_dim: int = 256
    gateway: str = "none"
    llm_url: str | None = None
    controller: str = "vector"
    controllers: str = "vector,graphrag,heuristic"
    seed: int = 0
    bootstrap_b: int = 10000
    jobs: int = 1
    controller_config: ControllerConfig = field(default_factory=ControllerConfig)


_RUN_KEYS = {f.name: f for f in fields(RunConfig) if f.name != "controller_config"}
_CTRL_KEYS = {f.name: f for f in fields(ControllerConfig)}
_INPUT_PATHS = ("corpus", "questions", "annotations", "gazetteer", "script")
_CHOICES = {"extractor": ("builtin", "annotations", "both"), "embedder": ("reference", "http"),
            "gateway": ("none", "scripted", "http"), "controller": CONTROLLERS}
_HELP = {
    "corpus": "corpus JSONL of {doc_id, title, text}",
    "questions": "questions JSONL of {qid, question, type, gold_evidence}",
    "annotations": "entity annotations JSONL of {doc_id, start_char, end_char, label, etype}",
    "gazetteer": "gazetteer JSON object mapping label to entity type",
    "script": "scripted gateway JSON",
    "snapshot": "knowledge-base snapshot (written by build, read by the other commands)",
    "out": "output path (build: snapshot file; eval/diagnose: directory; export-triples: file)",
    "extractor": "entity source when building from a corpus",
    "embedder": "chunk/query embedder",
    "embedder_url": "HTTP embedder endpoint (defaults to $EMBEDDER_URL)",
    "embedder_dim": "embedding dimension",
    "gateway": "LLM gateway for the llm controller",
    "llm_url": "HTTP LLM endpoint (defaults to $LLM_URL)",
    "controller": "controller for ask",
    "controllers": "comma-separated controllers for eval",
    "seed": "bootstrap seed",
    "bootstrap_b": "bootstrap resamples",
    "jobs": "questions evaluated in parallel",
    "k": "evidence budget per question",
    "seed_k": "GraphRAG-local vector seeds",
    "expand_entities": "GraphRAG-local entities expanded",
    "per_entity_chunk_cap": "GraphRAG-local chunks kept per entity",
    "bfs_depth": "heuristic maximum BFS depth",
    "max_turns": "LLM turn budget",
    "stall_break_heuristic": "heuristic zero-yield iterations before stopping",
    "stall_break_llm": "LLM stalled turns before stopping (after half the budget)",
    "boost": "score bonus for collected chunks",
    "backfill_discount": "score multiplier for backfilled chunks",
    "n_seed": "seed entities returned by entity_search",
}


def _convert(key: str, raw: str, ftype: str):
    try:
        if ftype.startswith("int"):
            return int(raw)
        if ftype.startswith("float"):
            return float(raw)
    except ValueError as exc:
        raise UsageError(f"{key}: expected {ftype.split()[0]}, got {raw!r}") from exc
    if key in _CHOICES and raw not in _CHOICES[key]:
        raise UsageError(f"{key}: {raw!r} is not one of {', '.join(_CHOICES[key])}")
    return raw


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; unknown keys are rejected."""
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _RUN_KEYS and key not in _CTRL_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def resolve_config(args) -> RunConfig:
    raw = read_config_file(args.config) if args.config else {}
    for key in list(_RUN_KEYS) + list(_CTRL_KEYS):
        flag = getattr(args, key, None)
        if flag is not None:
            raw[key] = str(flag)
    run_kw, ctrl_kw = {}, {}
    for key, value in raw.items():
        if key in _RUN_KEYS:
            run_kw[key] = _convert(key, value, str(_RUN_KEYS[key].type))
        else:
            ctrl_kw[key] = _convert(key, value, str(_CTRL_KEYS[key].type))
    try:
        cfg = RunConfig(**run_kw, controller_config=ControllerConfig(**ctrl_kw))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    for key in _INPUT_PATHS:
        p = getattr(cfg, key)
        if p is not None and not Path(p).exists():
            raise DataValidationError(f"{key}: {p} does not exist")
    return cfg


def _embedder(cfg: RunConfig):
    if cfg.embedder == "http":
        url = cfg.embedder_url or os.environ.get("EMBEDDER_URL")
        if not url:
            raise UsageError("embedder = http needs embedder_url or $EMBEDDER_URL")
        return HttpEmbedder(url, dim=cfg.embedder_dim)
    return ReferenceEmbedder(cfg.embedder_dim)


def _spans(cfg: RunConfig, docs):
    gaz = load_gazetteer(cfg.gazetteer) if cfg.gazetteer else None
    if cfg.extractor == "builtin":
        return extract_corpus_mentions(docs, gaz)
    if not cfg.annotations:
        raise UsageError(f"extractor = {cfg.extractor} needs annotations")
    spans = load_annotations(cfg.annotations, docs)
    if cfg.extractor == "both":
        spans = sorted(set(spans) | set(extract_corpus_mentions(docs, gaz)),
                       key=lambda s: (s.doc_id, s.start_char, s.end_char, s.label, s.etype))
    return spans


def build_kb(cfg: RunConfig) -> KnowledgeBase:
    if not cfg.corpus:
        raise UsageError("a corpus is required")
    docs = load_corpus(cfg.corpus)
    if not docs:
        raise DataValidationError(f"{cfg.corpus}: corpus is empty")
    return KnowledgeBase.build(docs, spans=_spans(cfg, docs), embedder=_embedder(cfg))


def load_kb(cfg: RunConfig) -> KnowledgeBase:
    if cfg.snapshot:
        if not Path(cfg.snapshot).exists():
            raise DataValidationError(f"snapshot: {cfg.snapshot} does not exist")
        return KnowledgeBase.load(cfg.snapshot)
    return build_kb(cfg)


def make_gateway(cfg: RunConfig):
    if cfg.gateway == "scripted":
        if not cfg.script:
            raise UsageError("gateway = scripted needs script")
        return ScriptedGateway.from_file(cfg.script)
    if cfg.gateway == "http":
        if cfg.llm_url:
                return HttpGateway(cfg.llm_url, api_key=os.environ.get("LLM_API_KEY"))
        return HttpGateway.from_env()
    return None


def cmd_build(cfg: RunConfig, args) -> int:
    """Chunk, extract, link and embed a corpus into a snapshot."""
    target = cfg.out or cfg.snapshot
    if not target:
        raise UsageError("build needs out (snapshot path)")
    kb = build_kb(cfg)
    Path(target).parent.mkdir(parents=True, exist_ok=True)
    kb.save(target)
    stats = kb.stats()
    print(f"snapshot written to {target}")
    for key in ("documents", "chunks", "entities", "mentions", "co_mention_edges"):
        print(f"  {key:<20} {stats[key]}")
    print(f"  {'entities_per_chunk':<20} {stats['entities_per_chunk']:.2f}")
    print(f"  {'chunks_with_entity':<20} {100 * stats['chunks_with_entity']:.1f}%")
    return EXIT_OK


def cmd_ask(cfg: RunConfig, args) -> int:
    """Retrieve evidence for one question."""
    kb = load_kb(cfg)
    gateway = make_gateway(cfg)
    name = cfg.controller
    if name == "llm" and gateway is None:
        raise UsageError("the llm controller needs gateway = scripted or http")
    ev = run_controller(name, args.question, kb, cfg.controller_config, gateway=gateway)
    trace = Path(args.trace) if args.trace else Path(cfg.out or ".") / f"trace-{name}.jsonl"
    trace.parent.mkdir(parents=True, exist_ok=True)
    ev.write_trace(trace, args.question, kb=kb)
    if args.json:
        print(json.dumps({"controller": name, "stop_reason": ev.stop_reason, "error": ev.error,
                          "evidence": [{"chunk_id": c, "score": s, "source": src,
                                        "doc_id": kb.chunks[c].doc_id} for c, s, src in ev.items]},
                         indent=1))
    else:
        print(f"{name}: {len(ev.items)} chunks (stop: {ev.stop_reason})")
        for rank, (cid, score, source) in enumerate(ev.items, start=1):
            preview = " ".join(kb.chunks[cid].text.split())[:80]
            print(f"{rank:>3}. {score:.4f}  {source:<9} {cid}  [{kb.chunks[cid].doc_id}]  {preview}")
        if ev.error:
            print(f"error: {ev.error}")
    print(f"trace: {trace}", file=sys.stderr)
    if args.answer:
        if gateway is None:
            raise UsageError("--answer needs a gateway")
        passages = "\n\n".join(f"[{c}] {kb.chunks[c].text}" for c in ev.chunk_ids)
        print(gateway.oneshot(f"Answer the question from the passages, citing chunk ids.\n\n"
                              f"Question: {args.question}\n\nPassages:\n{passages}"))
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    """Evaluate controllers on a question set."""
    if not cfg.questions or not cfg.out:
        raise UsageError("eval needs questions and out")
    names = [c.strip() for c in cfg.controllers.split(",") if c.strip()]
    unknown = [c for c in names if c not in CONTROLLERS]
    if unknown or not names:
        raise UsageError(f"unknown controller(s) {unknown}; choose from {', '.join(CONTROLLERS)}")
    kb = load_kb(cfg)
    questions = load_questions(cfg.questions)
    report = run_eval(questions, kb, names, cfg.controller_config, gateway=make_gateway(cfg),
                      out_dir=cfg.out, seed=cfg.seed, n_jobs=cfg.jobs, B=cfg.bootstrap_b)
    print((Path(cfg.out) / "tables.txt").read_text(encoding="utf-8"), end="")
    if report["flagged_questions"]:
        print(f"flagged (no gold chunks): {', '.join(report['flagged_questions'])}")
    return EXIT_OK


def cmd_diagnose(cfg: RunConfig, args) -> int:
    """Graph health metrics and failure categories from an eval run."""
    if not cfg.questions or not cfg.out:
        raise UsageError("diagnose needs questions and out (an eval output directory)")
    out = Path(cfg.out)
    if not (out / "records.jsonl").exists():
        raise DataValidationError(f"{out}: no records.jsonl; run eval first")
    if not (out / "traces").is_dir():
        raise DataValidationError(f"{out}: no traces directory; run eval first")
    kb = load_kb(cfg)
    questions = load_questions(cfg.questions)
    map_gold(questions, kb)
    by_qid = {q.qid: q for q in questions}
    records = load_records(out / "records.jsonl")
    health, failures = {}, {}
    for name in dict.fromkeys(r.controller for r in records):
        recs = [r for r in records if r.controller == name]
        traces = load_traces(out, recs)
        rep = compute_kg_health(recs, traces, kb.graph, questions, cfg.controller_config.n_seed)
        for w in rep.warnings:
            log.warning("%s: %s", name, w)
        health[name] = health_to_dict(rep)
        failures[name] = {r.qid: failure_categories(r, by_qid[r.qid], kb.graph, traces.get(r.qid),
                                                    cfg.controller_config.n_seed)
                          for r in recs if r.qid in by_qid}
    (out / "health.json").write_text(json.dumps(health, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    (out / "failures.json").write_text(json.dumps(failures, sort_keys=True, indent=1) + "\n",
                                       encoding="utf-8")
    for name, h in health.items():
        print(f"[{name}]")
        for key in ("seed_hit_rate", "hop_efficiency", "neighborhood_noise", "backfill_reliance",
                    "evidence_redundancy"):
            v = h[key]
            print(f"  {key:<20} {'null' if v is None else f'{v:.4f}'}")
        for hop, v in h["reachability_at_h"].items():
            print(f"  reachability@{hop:<7} {'null' if v is None else f'{v:.4f}'}")
        for qid, cats in failures[name].items():
            if cats:
                print(f"  {qid}: {', '.join(cats)}")
    return EXIT_OK


def cmd_export_triples(cfg: RunConfig, args) -> int:
    """Write the mention graph as N-Triples-style lines."""
    if not cfg.out:
        raise UsageError("export-triples needs out (triples file)")
    kb = load_kb(cfg)
    Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
    export_triples(kb.graph, cfg.out)
    print(f"triples written to {cfg.out}")
    return EXIT_OK


COMMANDS = {"build": cmd_build, "ask": cmd_ask, "eval": cmd_eval, "diagnose": cmd_diagnose,
            "export-triples": cmd_export_triples}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_settings(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    run = p.add_argument_group("run settings")
    for key, f in _RUN_KEYS.items():
        run.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                         choices=_CHOICES.get(key), help=f"{_HELP[key]} (default: {f.default})")
    ctrl = p.add_argument_group("controller settings")
    for key, f in _CTRL_KEYS.items():
        ctrl.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                          help=f"{_HELP[key]} (default: {f.default})")


def build_parser() -> argparse.ArgumentParser:
    epilog = "controller settings (accepted by every command):\n" + "\n".join(
        f"  --{k.replace('_', '-'):<24} {_HELP[k]} (default {f.default})" for k, f in _CTRL_KEYS.items())
    parser = _Parser(prog="kgnav", description="Entity-graph navigation retrieval toolkit.",
                     epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__, description=fn.__doc__)
        if name == "ask":
            p.add_argument("question")
            p.add_argument("--trace", help="trace path (default: <out or .>/trace-<controller>.jsonl)")
            p.add_argument("--json", action="store_true", help="print evidence as JSON")
            p.add_argument("--answer", action="store_true", help="one generation call over the evidence")
        _add_settings(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"kgnav: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataValidationError, NotFoundError) as exc:
        print(f"kgnav: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GatewayError, KgnavError, RuntimeError, OSError, ValueError) as exc:
        print(f"kgnav: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
