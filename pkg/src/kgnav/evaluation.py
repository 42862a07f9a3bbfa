"""Gold-evidence mapping, chunk-level metrics, paired bootstrap and graph health diagnostics."""

from __future__ import annotations

import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .controllers import ControllerConfig, EvidenceList, run_controller
from .entities import entity_search
from .errors import DataValidationError
from .tools import read_trace

log = logging.getLogger(__name__)

QTYPES = ("FactRetrieval", "ComplexReasoning", "ContextualSummarization", "CreativeGeneration")
SCATTER_BINS = ("1-5", "6-10", "11+")
TIE_TOL = 1e-9


@dataclass
class Question:
    qid: str
    question: str
    qtype: str
    gold_evidence: list
    gold_chunks: set = field(default_factory=set)
    mapping: list = field(default_factory=list)   # per sentence: substring | semantic | unmapped


def load_questions(path) -> list[Question]:
    """Questions JSONL: ``{qid, question, type, gold_evidence: [str, ...]}``."""
    out, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                q = Question(str(obj["qid"]), obj["question"], obj["type"], list(obj["gold_evidence"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataValidationError(f"{path}:{lineno}: malformed question ({exc})") from exc
            if q.qtype not in QTYPES:
                raise DataValidationError(f"{path}:{lineno}: unknown question type {q.qtype!r}")
            if q.qid in seen:
                raise DataValidationError(f"{path}:{lineno}: duplicate qid {q.qid!r}")
            seen.add(q.qid)
            out.append(q)
    return out


def _norm_ws(text: str) -> str:
    return " ".join(text.split()).lower()


def map_evidence_to_chunks(sentences, chunks, index, embed, k_fallback: int = 5,
                           sim_threshold: float = 0.25):
    """Return ``(gold_chunk_ids, per_sentence_method)``.

    Stage 1 is case-insensitive, whitespace-normalized substring containment.
    Stage 2 runs only for sentences Stage 1 could not place: the top
    ``k_fallback`` chunks by cosine with similarity at least ``sim_threshold``.
    """
    normalized = [(c.chunk_id, _norm_ws(c.text)) for c in chunks]
    gold, methods = set(), []
    for sentence in sentences:
        needle = _norm_ws(sentence)
        hits = {cid for cid, text in normalized if needle and needle in text}
        if hits:
            gold |= hits
            methods.append("substring")
            continue
        semantic = [cid for cid, sim in index.search_top_k(embed(sentence), k_fallback)
                    if sim >= sim_threshold]
        gold.update(semantic)
        methods.append("semantic" if semantic else "unmapped")
    return gold, methods


def prf1(retrieved, gold) -> tuple[float, float, float]:
    retrieved, gold = set(retrieved), set(gold)
    hit = len(retrieved & gold)
    p = hit / len(retrieved) if retrieved else 0.0
    r = hit / len(gold) if gold else 1.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def scatter_bin(gold_count: int) -> str:
    if gold_count <= 5:
        return "1-5"
    if gold_count <= 10:
        return "6-10"
    return "11+"


@dataclass
class BootstrapReport:
    mean_delta: float        # percentage points
    ci_low: float
    ci_high: float
    p_two_sided: float
    B: int
    wins: int
    ties: int
    losses: int
    n: int
    seed: int


def _nearest_rank(sorted_values, pct_num: int, pct_den: int):
    rank = max(1, -(-len(sorted_values) * pct_num // pct_den))
    return sorted_values[rank - 1]


def paired_bootstrap(deltas, B: int = 10000, seed: int = 0, block: int = 1000) -> BootstrapReport:
    """Percentile bootstrap of the mean per-question delta.

    Resampling uses numpy's PCG64 generator seeded with ``seed``. The CI uses
    nearest-rank 2.5th/97.5th percentiles; the two-sided p-value doubles the
    smaller sign fraction of resampled means, floored at ``1/B``.
    """
    x = np.asarray(deltas, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ValueError("paired_bootstrap needs at least two deltas")
    rng = np.random.Generator(np.random.PCG64(seed))
    means = np.empty(B)
    for start in range(0, B, block):
        rows = min(block, B - start)
        means[start:start + rows] = x[rng.integers(0, n, size=(rows, n))].mean(axis=1)
    means.sort()
    p = 2.0 * min(np.count_nonzero(means <= 0) / B, np.count_nonzero(means >= 0) / B)
    p = min(max(p, 1.0 / B), 1.0)
    return BootstrapReport(
        mean_delta=100.0 * float(x.mean()),
        ci_low=100.0 * float(_nearest_rank(means, 25, 1000)),
        ci_high=100.0 * float(_nearest_rank(means, 975, 1000)),
        p_two_sided=p,
        B=B,
        wins=int(np.count_nonzero(x > TIE_TOL)),
        ties=int(np.count_nonzero(np.abs(x) <= TIE_TOL)),
        losses=int(np.count_nonzero(x < -TIE_TOL)),
        n=n,
        seed=seed,
    )


@dataclass
class EvalRecord:
    qid: str
    controller: str
    qtype: str
    retrieved: list
    sources: list
    precision: float
    recall: float
    f1: float
    gold_count: int
    scatter_bin: str
    token_estimate: int
    wall_ms: int
    gateway_turns: int = 0
    gateway_tokens: int = 0
    turns: int = 0
    trace_ref: str | None = None
    flagged: bool = False
    error: str | None = None


@dataclass
class KgHealthReport:
    seed_hit_rate: float | None
    reachability_at_h: dict
    hop_efficiency: float | None
    neighborhood_noise: float | None
    backfill_reliance: float | None
    evidence_redundancy: float | None
    warnings: list = field(default_factory=list)


def _jaccard(a: set, b: set) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def mean_pairwise_jaccard(entity_sets) -> float | None:
    pairs = list(combinations(entity_sets, 2))
    if not pairs:
        return None
    return sum(_jaccard(a, b) for a, b in pairs) / len(pairs)


def _tool_calls(trace):
    return [r for r in trace if r.get("type") == "tool_call"]


def neighborhood_ratios(trace) -> list[float]:
    """Per expand_neighbors call: neighbors returned / max(1, neighbors explored afterwards)."""
    calls = _tool_calls(trace)
    ratios = []
    for i, call in enumerate(calls):
        if call["tool"] != "expand_neighbors" or call.get("error"):
            continue
        returned = call.get("result_ids", [])
        later = {c["args"].get("uri") for c in calls[i + 1:] if c["tool"] == "get_chunks_for_entity"}
        used = sum(1 for n in returned if n in later)
        ratios.append(len(returned) / max(1, used))
    return ratios


def compute_kg_health(records, traces, graph, questions, n_seed: int = 10,
                      hops=(1, 2, 3)) -> KgHealthReport:
    """Trace-driven graph health metrics for one controller's records.

    ``traces`` maps qid to parsed trace records; ``None`` or missing entries
    produce nulls for the trace-derived metrics plus a warning.
    """
    warnings = []
    qs = [q for q in questions if q.gold_chunks]
    hits, reach_num, gold_total = 0, {h: 0.0 for h in hops}, 0
    for q in qs:
        seeds = [u for u, _, _ in entity_search(q.question, graph, n_seed)]
        gold_entities = {u for c in q.gold_chunks for u in graph.chunk_entities.get(c, ())}
        hits += bool(gold_entities.intersection(seeds))
        gold_total += len(q.gold_chunks)
        for h in hops:
            reach_num[h] += graph.reachability_at_h(seeds, q.gold_chunks, h) * len(q.gold_chunks)
    seed_hit_rate = hits / len(qs) if qs else None
    reachability = {h: (reach_num[h] / gold_total if gold_total else None) for h in hops}

    gold_by_q = {q.qid: q.gold_chunks for q in questions}
    hop_efficiency = noise = None
    if traces is None:
        warnings.append("no traces supplied; trace-derived metrics are null")
    else:
        missing = [r.qid for r in records if r.qid not in traces]
        if missing:
            warnings.append(f"missing traces for {len(missing)} question(s): {', '.join(missing[:5])}")
        else:
            n_calls = sum(len(_tool_calls(traces[r.qid])) for r in records)
            found = sum(len(set(r.retrieved) & gold_by_q.get(r.qid, set())) for r in records)
            hop_efficiency = found / n_calls if n_calls else None
            ratios = [x for r in records for x in neighborhood_ratios(traces[r.qid])]
            noise = statistics.median(ratios) if ratios else None

    filled = [r for r in records if r.retrieved]
    backfill = (sum(r.sources.count("backfill") / len(r.sources) for r in filled) / len(filled)
                if filled else None)
    redund = [mean_pairwise_jaccard([set(graph.chunk_entities.get(c, ())) for c in r.retrieved])
              for r in records]
    redund = [v for v in redund if v is not None]
    return KgHealthReport(
        seed_hit_rate=seed_hit_rate,
        reachability_at_h=reachability,
        hop_efficiency=hop_efficiency,
        neighborhood_noise=noise,
        backfill_reliance=backfill,
        evidence_redundancy=sum(redund) / len(redund) if redund else None,
        warnings=warnings,
    )


# failure-category thresholds
QUERYABILITY_MIN_CALLS = 15
QUERYABILITY_MAX_YIELD = 0.1
PROVENANCE_NEAR_MISS_SHARE = 0.5


def failure_categories(record: EvalRecord, question: Question, graph, trace=None,
                       n_seed: int = 10) -> list[str]:
    gold = question.gold_chunks
    if not gold:
        return ["unmapped_gold"]
    cats = []
    seeds = [u for u, _, _ in entity_search(question.question, graph, n_seed)]
    gold_entities = {u for c in gold for u in graph.chunk_entities.get(c, ())}
    if not gold_entities.intersection(seeds):
        cats.append("coverage")
    if graph.reachability_at_h(seeds, gold, 3) < 1.0:
        cats.append("connectivity")
    sources = dict(zip(record.retrieved, record.sources))
    gold_hits = [c for c in record.retrieved if c in gold]
    if gold_hits and all(sources[c] == "backfill" for c in gold_hits) and "coverage" not in cats:
        cats.append("coverage")
    misses = [c for c in record.retrieved if c not in gold]
    near = [c for c in misses if gold_entities.intersection(graph.chunk_entities.get(c, ()))]
    if record.retrieved and len(near) / len(record.retrieved) >= PROVENANCE_NEAR_MISS_SHARE:
        cats.append("provenance")
    if trace is not None:
        n_calls = len(_tool_calls(trace))
        if n_calls >= QUERYABILITY_MIN_CALLS and len(gold_hits) / n_calls < QUERYABILITY_MAX_YIELD:
            cats.append("queryability")
    return cats


def make_record(q: Question, ev: EvidenceList, trace_ref=None) -> EvalRecord:
    p, r, f = prf1(ev.chunk_ids, q.gold_chunks)
    return EvalRecord(
        qid=q.qid, controller=ev.controller, qtype=q.qtype,
        retrieved=ev.chunk_ids, sources=[s for _, _, s in ev.items],
        precision=p, recall=r, f1=f,
        gold_count=len(q.gold_chunks), scatter_bin=scatter_bin(len(q.gold_chunks)),
        token_estimate=ev.token_estimate, wall_ms=ev.wall_ms,
        gateway_turns=ev.gateway_turns, gateway_tokens=ev.gateway_tokens, turns=ev.turns,
        trace_ref=trace_ref, flagged=not q.gold_chunks, error=ev.error,
    )


def map_gold(questions, kb, k_fallback: int = 5, sim_threshold: float = 0.25) -> None:
    """Populate ``gold_chunks`` once per question; every controller is scored against it."""
    chunks = list(kb.chunks.values())
    for q in questions:
        q.gold_chunks, q.mapping = map_evidence_to_chunks(
            q.gold_evidence, chunks, kb.index, kb.embed_query, k_fallback, sim_threshold)


def _macro(records):
    # empty-gold questions are excluded; failed runs still count with their partial evidence
    kept = [r for r in records if r.gold_count]
    if not kept:
        return {"n": 0, "precision": None, "recall": None, "f1": None}
    n = len(kept)
    return {"n": n,
            "precision": sum(r.precision for r in kept) / n,
            "recall": sum(r.recall for r in kept) / n,
            "f1": sum(r.f1 for r in kept) / n}


def _compare(recs_a, recs_b, B, seed):
    by_a = {r.qid: r for r in recs_a if r.gold_count}
    pairs = [(by_a[r.qid], r) for r in recs_b if r.qid in by_a]
    if len(pairs) < 2:
        return None
    return asdict(paired_bootstrap([b.f1 - a.f1 for a, b in pairs], B=B, seed=seed))


def run_eval(questions, kb, controllers=("vector", "graphrag", "heuristic"),
             cfg: ControllerConfig = ControllerConfig(), gateway=None, out_dir=None, seed: int = 0,
             n_jobs: int = 1, B: int = 10000, clock=time.perf_counter) -> dict:
    """Evaluate controllers on a shared gold mapping and write report files to ``out_dir``."""
    controllers = list(controllers)
    if "llm" in controllers and gateway is None:
        raise ValueError("the llm controller needs a gateway")
    map_gold(questions, kb)
    out = Path(out_dir) if out_dir else None

    def one(name, q):
        try:
            ev = run_controller(name, q.question, kb, cfg, gateway=gateway, clock=clock)
        except Exception as exc:  # a broken question must not sink the batch
            log.exception("controller %s failed on %s", name, q.qid)
            ev = EvidenceList(name, error=f"{type(exc).__name__}: {exc}", stop_reason="error", config=cfg)
        ref = None
        if out is not None:
            tdir = out / "traces" / name
            tdir.mkdir(parents=True, exist_ok=True)
            ref = str(Path("traces") / name / f"{q.qid}.jsonl")
            ev.write_trace(out / ref, q.question, q.qid, kb)
        rec = make_record(q, ev, ref)
        rec.flagged = rec.flagged or ev.error is not None
        return rec

    records = {}
    with ThreadPoolExecutor(max_workers=max(1, n_jobs)) as pool:
        for name in controllers:
            records[name] = list(pool.map(lambda q: one(name, q), questions))

    report = build_report(questions, records, B=B, seed=seed)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        with open(out / "records.jsonl", "w", encoding="utf-8") as fh:
            for name in controllers:
                for rec in records[name]:
                    fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
        (out / "tables.txt").write_text(render_tables(report), encoding="utf-8")
    report["_records"] = records
    return report


def build_report(questions, records: dict, B: int = 10000, seed: int = 0) -> dict:
    names = list(records)
    mapping_counts = {m: sum(q.mapping.count(m) for q in questions)
                      for m in ("substring", "semantic", "unmapped")}
    report = {
        "n_questions": len(questions),
        "flagged_questions": sorted(q.qid for q in questions if not q.gold_chunks),
        "gold_mapping": mapping_counts,
        "bootstrap": {"B": B, "seed": seed, "generator": "numpy PCG64"},
        "overall": {},
        "cost": {},
        "pairwise": {},
        "by_type": {},
        "by_scatter": {},
    }
    for name in names:
        report["overall"][name] = _macro(records[name])
        recs = records[name]
        report["cost"][name] = {
            "mean_token_estimate": sum(r.token_estimate for r in recs) / len(recs) if recs else 0.0,
            "mean_gateway_tokens": sum(r.gateway_tokens for r in recs) / len(recs) if recs else 0.0,
            "mean_gateway_turns": sum(r.gateway_turns for r in recs) / len(recs) if recs else 0.0,
        }
    for a, b in combinations(names, 2):
        report["pairwise"][f"{b} - {a}"] = _compare(records[a], records[b], B, seed)

    for group_key, attr, labels in (("by_type", "qtype", QTYPES), ("by_scatter", "scatter_bin", SCATTER_BINS)):
        for label in labels:
            sub = {n: [r for r in records[n] if getattr(r, attr) == label] for n in names}
            if not any(sub.values()):
                continue
            entry = {"f1": {n: _macro(sub[n])["f1"] for n in names},
                     "n": _macro(sub[names[0]])["n"], "pairwise": {}}
            for a, b in combinations(names, 2):
                cmp = _compare(sub[a], sub[b], B, seed)
                if cmp is not None:
                    cmp = {k: cmp[k] for k in ("mean_delta", "wins", "ties", "losses", "n")}
                entry["pairwise"][f"{b} - {a}"] = cmp
            report[group_key][label] = entry
    return report


def _pct(v):
    return "   n/a" if v is None else f"{100 * v:5.1f}%"


def render_tables(report: dict) -> str:
    lines = ["System        Precision  Recall      F1     n"]
    for name, m in report["overall"].items():
        lines.append(f"{name:<12}  {_pct(m['precision']):>9}  {_pct(m['recall']):>6}  {_pct(m['f1']):>6}  {m['n']:>4}")
    lines += ["", "Comparison               Mean dF1 (pp)  95% CI (pp)           p       W/T/L"]
    for label, c in report["pairwise"].items():
        if c is None:
            lines.append(f"{label:<24} n/a")
            continue
        lines.append(f"{label:<24} {c['mean_delta']:+8.2f}       [{c['ci_low']:+6.2f}, {c['ci_high']:+6.2f}]"
                     f"  {c['p_two_sided']:.4f}  {c['wins']}/{c['ties']}/{c['losses']}")
    for key, title in (("by_type", "Type"), ("by_scatter", "Scatter")):
        if not report[key]:
            continue
        names = list(report["overall"])
        lines += ["", f"{title:<26} {'n':>4}  " + "  ".join(f"{n:>9}" for n in names)]
        for label, entry in report[key].items():
            f1s = "  ".join(f"{_pct(entry['f1'][n]):>9}" for n in names)
            lines.append(f"{label:<26} {entry['n']:>4}  {f1s}")
    return "\n".join(lines) + "\n"


def load_records(path) -> list[EvalRecord]:
    with open(path, encoding="utf-8") as fh:
        return [EvalRecord(**json.loads(line)) for line in fh if line.strip()]


def load_traces(out_dir, records) -> dict:
    """qid -> parsed trace for each record whose trace file exists."""
    traces = {}
    for r in records:
        if r.trace_ref and (Path(out_dir) / r.trace_ref).exists():
            traces[r.qid] = read_trace(Path(out_dir) / r.trace_ref)
    return traces


def health_to_dict(rep: KgHealthReport) -> dict:
    d = asdict(rep)
    d["reachability_at_h"] = {str(h): v for h, v in rep.reachability_at_h.items()}
    return d
