"""Stage runners shared by the command line and the demo scripts.

Every stage reads and writes plain files in one working directory, so stages
can run separately or end to end. Outputs carry no timestamps or absolute
paths: the same inputs, seed and backend give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .backends import make_backend
from .confidence import (
    TrainingDomain,
    count_assumptions,
    influence_spec_from_subgraph,
    report_csv_header,
    report_csv_row,
    score_prediction,
)
from .config import Config
from .embedding import (
    EMBEDDINGS_FILE,
    HashingEmbedder,
    HTTPEmbedder,
    SentenceTransformerEmbedder,
    default_backends,
    embed_graph,
    load_embeddings,
    save_embeddings,
)
from .equations import compile_expression, fit, read_csv
from .equations.generation import dumps_candidates, generate_candidates
from .errors import AMKGError, NoCandidateError
from .extraction import build_graph, chunk_documents, get_tokenizer, read_documents
from .hierarchy import HIERARCHY_FILE, Hierarchy, build_hierarchy
from .kg_store import load as load_graph
from .kg_store import save as save_graph
from .retrieval import Query, Subgraph, retrieve

log = logging.getLogger(__name__)

CHUNKS_FILE = "chunks.jsonl"
VALIDATION_FILE = "validation.json"
SUBGRAPH_FILE = "subgraph.json"
CANDIDATES_FILE = "candidates.json"
REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"
REPORT_SVG = "report.svg"
RAW_CANDIDATES = "raw_candidates.txt"
MANIFEST_FILE = "manifest.json"


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def _finite(v):
    v = float(v)
    return v if np.isfinite(v) else None


def write_manifest(out, command, cfg: Config, backend=None):
    """Record version, seed, parameters and artifact hashes in ``manifest.json``."""
    out = Path(out)
    path = out / MANIFEST_FILE
    manifest = json.loads(path.read_text()) if path.exists() else {"commands": []}
    if command not in manifest["commands"]:
        manifest["commands"].append(command)
    manifest["package"] = "amkg"
    manifest["version"] = __version__
    manifest["seed"] = cfg.seed
    manifest["config"] = cfg.to_dict()
    manifest["config"]["backend"]["fixture_dir"] = ""
    manifest["config"]["paths"]["out"] = ""
    if backend is not None:
        manifest["backend"] = backend.kind
    manifest["artifacts"] = {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(out.iterdir()) if p.is_file() and p.name != MANIFEST_FILE
    }
    path.write_text(dumps(manifest), encoding="utf-8")


def backend_from_config(cfg: Config, kind=None, record=False):
    kind = kind or cfg.backend.kind
    return make_backend(kind, fixture_dir=cfg.backend.fixture_dir or None, record=record,
                        model=cfg.backend.model)


def embedders_from_config(cfg: Config):
    kind = cfg.backend.embedder
    if kind == "hashing":
        return default_backends(cfg.seed)
    if kind == "http":
        return HashingEmbedder(384, cfg.seed), HTTPEmbedder()
    if kind == "sentence-transformers":
        model = SentenceTransformerEmbedder()
        return model, model
    raise AMKGError(f"unknown embedder {kind!r}")


# -- stages --------------------------------------------------------------------

def run_ingest(corpus, out, cfg: Config):
    docs = read_documents([corpus])
    if not docs:
        raise AMKGError(f"no markdown documents under {corpus}")
    tok = get_tokenizer(cfg.extraction.tokenizer)
    chunks = chunk_documents(docs, tok, cfg.extraction.max_tokens)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    text = "".join(json.dumps(c.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for c in chunks)
    (out / CHUNKS_FILE).write_text(text, encoding="utf-8")
    return chunks


def run_build(corpus, out, cfg: Config, backend):
    docs = read_documents([corpus])
    if not docs:
        raise AMKGError(f"no markdown documents under {corpus}")
    tok = get_tokenizer(cfg.extraction.tokenizer)
    result = build_graph(docs, backend, tok, jobs=cfg.jobs, max_tokens=cfg.extraction.max_tokens,
                         hint_cap=cfg.extraction.hint_tokens)
    out = Path(out)
    save_graph(result.graph, out)
    report = {
        "removed": result.removed.to_dict(),
        "final": result.final.to_dict(),
        "clean": result.clean,
        "n_chunks": len(result.chunks),
        "n_entities": len(result.graph.entities),
        "n_relations": len(result.graph.relations),
        "warnings": result.warnings,
    }
    (out / VALIDATION_FILE).write_text(dumps(report), encoding="utf-8")
    return result


def run_embed(out, cfg: Config):
    kg = load_graph(out)
    fb, tb = embedders_from_config(cfg)
    emb = embed_graph(kg, fb, tb, jobs=cfg.jobs)
    save_embeddings(emb, Path(out) / EMBEDDINGS_FILE)
    return emb


def run_cluster(out, cfg: Config, backend):
    kg = load_graph(out)
    emb = load_embeddings(Path(out) / EMBEDDINGS_FILE)
    _, tb = embedders_from_config(cfg)
    h = build_hierarchy(kg, emb, backend, tb, cfg.hierarchy, jobs=cfg.jobs)
    h.save(Path(out) / HIERARCHY_FILE)
    return h


def run_query(out, cfg: Config, inputs, target=None, text=None) -> Subgraph:
    out = Path(out)
    kg = load_graph(out)
    emb = load_embeddings(out / EMBEDDINGS_FILE)
    h = Hierarchy.load(out / HIERARCHY_FILE) if (out / HIERARCHY_FILE).exists() else None
    _, tb = embedders_from_config(cfg)
    sg = retrieve(kg, h, emb, Query(inputs, target, text), tb, k=cfg.retrieval.k,
                  max_entities=cfg.retrieval.max_entities)
    (out / SUBGRAPH_FILE).write_text(sg.dumps() + "\n", encoding="utf-8")
    return sg


def run_generate(out, cfg: Config, backend, inputs, target, subgraph=None):
    out = Path(out)
    if subgraph is None:
        subgraph = Subgraph.from_dict(json.loads((out / SUBGRAPH_FILE).read_text()))
    rejections = []
    try:
        cands = generate_candidates(subgraph, inputs, target, backend, M=cfg.generation.M,
                                    rejections=rejections)
    except NoCandidateError as exc:
        (out / RAW_CANDIDATES).write_text(exc.raw or "", encoding="utf-8")
        raise
    (out / CANDIDATES_FILE).write_text(dumps_candidates(cands) + "\n", encoding="utf-8")
    return cands, rejections


@dataclass
class ModelResult:
    candidate: object
    evaluator: object = None
    fit: object = None
    scores: list = field(default_factory=list)     # [(x_star, ConfidenceReport)]
    predictions: list = field(default_factory=list)
    error: str = ""

    @property
    def c_total(self):
        return self.scores[0][1].c_total if self.scores else -1.0


def fit_candidates(cands, data, cfg: Config):
    results = []
    for cand in cands:
        res = ModelResult(cand)
        try:
            res.evaluator = compile_expression(cand.expression, cand.inputs, cand.parameters,
                                               target=cand.target)
            res.fit = fit(res.evaluator, data, max_iter=cfg.generation.max_iter, seed=cfg.seed)
        except AMKGError as exc:
            res.error = f"{type(exc).__name__}: {exc}"
        results.append(res)
    return results


def _point(inputs, x):
    if isinstance(x, dict):
        return {k: float(v) for k, v in x.items()}
    return {inputs[0]: float(x)}


def score_results(results, data, x_stars, cfg: Config, subgraph=None):
    for res in results:
        if res.fit is None:
            continue
        cand = res.candidate
        domain = TrainingDomain.from_dataset(data, cand.inputs, cand.target)
        spec = influence_spec_from_subgraph(subgraph, cand.inputs, cand.target) if subgraph else []
        n_assump = count_assumptions(subgraph) if subgraph else 0
        for x in x_stars:
            point = _point(cand.inputs, x)
            y = float(np.asarray(res.evaluator(point, res.fit.theta)))
            res.predictions.append((point, y))
            try:
                rep = score_prediction(res.evaluator, res.fit, data, point, domain, spec, n_assump,
                                       cfg.confidence, cand.target)
            except AMKGError as exc:
                res.error = f"{type(exc).__name__}: {exc}"
                res.scores = []
                break
            res.scores.append((point, rep))
    return results


def rank(results):
    return sorted(results, key=lambda r: (-r.c_total, r.candidate.latex))


def report_dict(results, subgraph, inputs, target, x_stars, rejections=()):
    models = []
    for i, res in enumerate(rank(results), 1):
        cand = res.candidate
        models.append({
            "rank": i,
            "id": f"model_{i}",
            "latex": cand.latex,
            "source_latex": cand.source_latex,
            "inputs": cand.inputs,
            "parameters": cand.parameters,
            "fit": res.fit.to_dict() if res.fit is not None else None,
            "predictions": [{"x": p, "y": _finite(y)} for p, y in res.predictions],
            "confidence": [{"x": p, **rep.to_dict()} for p, rep in res.scores],
            "error": res.error,
        })
    return {
        "query": {"inputs": list(inputs), "target": target, "extrapolate": list(x_stars)},
        "subgraph": subgraph.metadata if subgraph is not None else None,
        "subgraph_symbols": sorted(subgraph.symbols()) if subgraph is not None else [],
        "rejected_candidates": [{"latex": r.latex, "reason": r.reason} for r in rejections],
        "models": models,
    }


def write_report_csv(results, path):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "latex"] + report_csv_header())
        for i, res in enumerate(rank(results), 1):
            for point, rep in res.scores:
                w.writerow([i, res.candidate.latex] + report_csv_row(f"model_{i}", point, rep))


def plot_fits(results, data, x_stars, path):
    """SVG of data, fitted curves and the shaded extrapolation region (single input)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fitted = [r for r in rank(results) if r.fit is not None and len(r.candidate.inputs) == 1]
    if not fitted:
        return False
    x_sym, y_sym = fitted[0].candidate.inputs[0], fitted[0].candidate.target
    x, y = data[x_sym], data[y_sym]
    xs_star = [float(p[x_sym]) if isinstance(p, dict) else float(p) for p in x_stars]
    lo = float(min(x.min(), *xs_star))
    hi = float(max(x.max(), *xs_star)) * 1.05
    grid = np.linspace(lo, hi, 200)
    plt.rcParams["svg.hashsalt"] = "amkg"
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.axvspan(float(x.max()), hi, color="0.9", label="extrapolation")
    ax.plot(x, y, "o", color="k", ms=4, label="data")
    for r in fitted:
        with np.errstate(all="ignore"):
            ax.plot(grid, r.evaluator({x_sym: grid}, r.fit.theta), lw=1.5,
                    label=f"${r.candidate.latex}$ (C={r.c_total:.3f})")
    for xv in xs_star:
        ax.axvline(xv, color="0.5", ls="--", lw=0.8)
    ax.set_xlabel(f"${x_sym}$" + (f" [{data.units[x_sym]}]" if data.units.get(x_sym) else ""))
    ax.set_ylabel(f"${y_sym}$" + (f" [{data.units[y_sym]}]" if data.units.get(y_sym) else ""))
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return True


def run_pipeline(corpus, out, cfg: Config, backend, inputs, target, data_path, x_stars, plot=True):
    """Build, embed, cluster, retrieve, generate, fit and score; returns the report dict."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data = read_csv(data_path)
    run_build(corpus, out, cfg, backend)
    run_embed(out, cfg)
    run_cluster(out, cfg, backend)
    sg = run_query(out, cfg, inputs, target)
    cands, rejections = run_generate(out, cfg, backend, inputs, target, subgraph=sg)
    results = score_results(fit_candidates(cands, data, cfg), data, x_stars, cfg, sg)
    report = report_dict(results, sg, inputs, target, x_stars, rejections)
    (out / REPORT_JSON).write_text(dumps(report), encoding="utf-8")
    write_report_csv(results, out / REPORT_CSV)
    if plot:
        plot_fits(results, data, x_stars, out / REPORT_SVG)
    return report


__all__ = [
    "run_ingest", "run_build", "run_embed", "run_cluster", "run_query", "run_generate",
    "fit_candidates", "score_results", "report_dict", "run_pipeline", "write_manifest",
    "ModelResult",
]
