"""``amkg`` command line: one subcommand per pipeline stage plus an end-to-end runner.

All commands share ``--out`` (working directory), ``--seed``, ``--backend``,
``--jobs`` and ``--config``. Artifacts land in the working directory next to a
``manifest.json`` recording versions, seeds and parameters.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, workflow
from .config import ORIGINS, Config, dumps_config, load_config
from .errors import AMKGError, NoCandidateError
from .extraction.metrics import partial_f1
from .kg_store import load as load_graph
from .ontology import validate_graph

log = logging.getLogger("amkg")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ERROR = 2
EXIT_NO_CANDIDATE = 3


def _defaults(*keys) -> str:
    cfg = Config().to_dict()
    lines = ["defaults:"]
    for key in keys:
        value = cfg
        for part in key.split("."):
            value = value[part]
        lines.append(f"  {key} = {value!r}  ({ORIGINS.get(key, 'adopted default')})")
    return "\n".join(lines)


STAGE_KEYS = {
    "ingest": ("extraction.max_tokens", "extraction.tokenizer"),
    "build": ("extraction.max_tokens", "extraction.hint_tokens", "extraction.tokenizer"),
    "validate": (),
    "embed": ("seed",),
    "cluster": ("hierarchy.alpha", "hierarchy.theta_sim", "hierarchy.k", "hierarchy.theta_stop",
                "hierarchy.min_equation_cluster", "hierarchy.resolution"),
    "query": ("retrieval.k", "retrieval.max_entities"),
    "generate": ("generation.M",),
    "fit": ("generation.max_iter",),
    "score": ("confidence.alpha", "confidence.beta", "confidence.gamma", "confidence.delta",
              "confidence.alpha_d", "confidence.bootstrap_B"),
    "pipeline": ("hierarchy.alpha", "hierarchy.theta_sim", "hierarchy.k", "hierarchy.theta_stop",
                 "retrieval.k", "generation.M", "confidence.alpha", "confidence.beta",
                 "confidence.gamma", "confidence.delta", "confidence.alpha_d", "confidence.bootstrap_B"),
    "eval": (),
    "config": (),
}


def _common(p):
    p.add_argument("--out", default=None, help="working directory for artifacts (default: amkg_out)")
    p.add_argument("--config", default=None, help="TOML configuration file")
    p.add_argument("--seed", type=int, default=None, help="seed for every stochastic step (default: 0)")
    p.add_argument("--backend", choices=["live", "fixture", "heuristic"], default=None,
                   help="text generation backend (default: fixture)")
    p.add_argument("--fixtures", default=None, help="directory of recorded responses for --backend fixture")
    p.add_argument("--record", action="store_true",
                   help="with --backend fixture, answer misses heuristically and record them")
    p.add_argument("--jobs", type=int, default=None, help="worker cap for parallel stages (default: 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def _query_args(p, target_required=False):
    p.add_argument("--inputs", nargs="+", required=True, help="input variable symbols or names")
    p.add_argument("--target", required=target_required, default=None, help="target variable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amkg", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--version", action="version", version=f"amkg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=_defaults(*STAGE_KEYS[name]),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _common(p)
        return p

    p = add("ingest", "chunk a markdown corpus into chunks.jsonl")
    p.add_argument("corpus")
    p = add("build", "extract, merge, post-process and validate the knowledge graph")
    p.add_argument("corpus")
    p.add_argument("--strict", action="store_true",
                   help="exit nonzero when post-processing had to drop anything")
    add("validate", "check the stored graph against rules R1-R6")
    add("embed", "compute fused formula/text embeddings for every entity")
    add("cluster", "build the multi-layer cluster hierarchy")
    p = add("query", "retrieve a subgraph for input/target variables")
    _query_args(p)
    p.add_argument("--text", default=None, help="natural-language query overriding the template")
    p = add("generate", "generate candidate equations from the retrieved subgraph")
    _query_args(p, target_required=True)
    p.add_argument("-M", type=int, default=None, help="candidate count (default: 3)")
    p = add("fit", "fit candidate equations (or one --latex) to a dataset")
    p.add_argument("--data", required=True, help="CSV dataset")
    p.add_argument("--latex", default=None, help="fit this equation instead of candidates.json")
    p = add("score", "fit and score candidates at extrapolation points")
    p.add_argument("--data", required=True)
    p.add_argument("--extrapolate", nargs="+", type=float, required=True)
    p.add_argument("--components", action="store_true", help="print the component breakdown table")
    p = add("pipeline", "run every stage end to end and write report.json/csv/svg")
    p.add_argument("corpus", nargs="?", default=None, help="corpus directory (default: bundled demo corpus)")
    _query_args(p, target_required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--extrapolate", nargs="+", type=float, required=True)
    p.add_argument("-M", type=int, default=None)
    p.add_argument("--no-plot", action="store_true")
    p = add("eval", "partial-match precision/recall/F1 of the stored graph against a reference")
    p.add_argument("--reference", required=True, help="directory with reference entities/relations JSONL")
    p = add("config", "show or write the effective configuration")
    p.add_argument("action", choices=["show", "init"])
    p.add_argument("path", nargs="?", default=None)
    return parser


def _config(args) -> Config:
    overrides = {}
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "backend", None):
        overrides.setdefault("backend", {})["kind"] = args.backend
    if getattr(args, "fixtures", None):
        overrides.setdefault("backend", {})["fixture_dir"] = args.fixtures
    if getattr(args, "out", None):
        overrides.setdefault("paths", {})["out"] = args.out
    if getattr(args, "M", None) is not None:
        overrides.setdefault("generation", {})["M"] = args.M
    cfg = load_config(getattr(args, "config", None), overrides)
    return cfg.seeded(args.seed if getattr(args, "seed", None) is not None else None)


def _out(cfg) -> Path:
    out = Path(cfg.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _backend(cfg, args):
    return workflow.backend_from_config(cfg, record=getattr(args, "record", False))


def cmd_ingest(args):
    cfg = _config(args)
    out = _out(cfg)
    chunks = workflow.run_ingest(args.corpus, out, cfg)
    workflow.write_manifest(out, "ingest", cfg)
    print(f"{len(chunks)} chunks -> {out / workflow.CHUNKS_FILE}")
    return EXIT_OK


def cmd_build(args):
    cfg = _config(args)
    out = _out(cfg)
    backend = _backend(cfg, args)
    result = workflow.run_build(args.corpus, out, cfg, backend)
    workflow.write_manifest(out, "build", cfg, backend)
    print(f"{len(result.graph.entities)} entities, {len(result.graph.relations)} relations; "
          f"{len(result.removed.violations)} violation(s) removed during post-processing")
    for v in result.removed.violations:
        print(f"  removed {v.rule}: {v.item}")
    if not result.clean:
        return EXIT_INVALID
    if args.strict and result.removed.violations:
        return EXIT_INVALID
    return EXIT_OK


def cmd_validate(args):
    cfg = _config(args)
    report = validate_graph(load_graph(_out(cfg)))
    print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return EXIT_OK if report.is_valid else EXIT_INVALID


def cmd_embed(args):
    cfg = _config(args)
    out = _out(cfg)
    emb = workflow.run_embed(out, cfg)
    workflow.write_manifest(out, "embed", cfg)
    print(f"{len(emb)} embeddings -> {out / 'embeddings.jsonl'}")
    return EXIT_OK


def cmd_cluster(args):
    cfg = _config(args)
    out = _out(cfg)
    backend = _backend(cfg, args)
    h = workflow.run_cluster(out, cfg, backend)
    workflow.write_manifest(out, "cluster", cfg, backend)
    print("clusters per layer: " + ", ".join(str(len(layer)) for layer in h.layers))
    return EXIT_OK


def cmd_query(args):
    cfg = _config(args)
    out = _out(cfg)
    sg = workflow.run_query(out, cfg, args.inputs, args.target, args.text)
    workflow.write_manifest(out, "query", cfg)
    print(json.dumps(sg.metadata, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_generate(args):
    cfg = _config(args)
    out = _out(cfg)
    backend = _backend(cfg, args)
    sg = None
    if not (out / workflow.SUBGRAPH_FILE).exists():
        sg = workflow.run_query(out, cfg, args.inputs, args.target)
    cands, rejections = workflow.run_generate(out, cfg, backend, args.inputs, args.target, sg)
    workflow.write_manifest(out, "generate", cfg, backend)
    for c in cands:
        print(c.latex)
    for r in rejections:
        print(f"rejected: {r.latex} ({r.reason})")
    return EXIT_OK


def _load_candidates(out, latex=None):
    from .equations.generation import CandidateEquation
    from .equations.latex import free_symbols, parse_latex

    items = [{"latex": latex}] if latex else json.loads((out / workflow.CANDIDATES_FILE).read_text())
    cands = []
    for item in items:
        eq = parse_latex(item["latex"])
        variables, params = free_symbols(eq.rhs)
        inputs = item.get("inputs") or [v for v in variables if v not in (item.get("constants") or [])]
        constants = [v for v in variables if v not in inputs]
        cands.append(CandidateEquation(item["latex"], eq.target, inputs, list(params) + constants,
                                       eq.rhs, item.get("source_latex", ""), constants))
    return cands


def cmd_fit(args):
    from .equations import read_csv

    cfg = _config(args)
    out = _out(cfg)
    data = read_csv(args.data)
    results = workflow.fit_candidates(_load_candidates(out, args.latex), data, cfg)
    payload = [{"latex": r.candidate.latex, "fit": r.fit.to_dict() if r.fit else None, "error": r.error}
               for r in results]
    (out / "fits.json").write_text(workflow.dumps(payload), encoding="utf-8")
    workflow.write_manifest(out, "fit", cfg)
    for r in results:
        if r.fit is None:
            print(f"{r.candidate.latex}: {r.error}")
        else:
            print(f"{r.candidate.latex}: R2={r.fit.r_squared:.6f} RMSE={r.fit.rmse:.6g} "
                  + " ".join(f"{k}={v:.6g}" for k, v in r.fit.params().items()))
    return EXIT_OK if any(r.fit for r in results) else EXIT_ERROR


def cmd_score(args):
    from .equations import read_csv
    from .retrieval import Subgraph

    cfg = _config(args)
    out = _out(cfg)
    data = read_csv(args.data)
    sg = None
    if (out / workflow.SUBGRAPH_FILE).exists():
        sg = Subgraph.from_dict(json.loads((out / workflow.SUBGRAPH_FILE).read_text()))
    cands = _load_candidates(out)
    results = workflow.score_results(workflow.fit_candidates(cands, data, cfg), data, args.extrapolate, cfg, sg)
    report = workflow.report_dict(results, sg, cands[0].inputs, cands[0].target, args.extrapolate)
    (out / "scores.json").write_text(workflow.dumps(report), encoding="utf-8")
    workflow.write_report_csv(results, out / "scores.csv")
    workflow.write_manifest(out, "score", cfg)
    for r in workflow.rank(results):
        print(f"{r.candidate.latex}: C_total={r.c_total:.4f}" + (f" ({r.error})" if r.error else ""))
        if args.components and r.scores:
            print(r.scores[0][1].components_table(cfg.confidence))
    return EXIT_OK


def cmd_pipeline(args):
    from .data import corpus_dir

    cfg = _config(args)
    out = _out(cfg)
    backend = _backend(cfg, args)
    data = Path(args.data)
    if not data.is_file():
        print(f"error: dataset {data} not found", file=sys.stderr)
        return EXIT_ERROR
    corpus = args.corpus or str(corpus_dir())
    try:
        report = workflow.run_pipeline(corpus, out, cfg, backend, args.inputs, args.target, data,
                                       args.extrapolate, plot=not args.no_plot)
    except NoCandidateError:
        print(f"error: no valid candidate equation; raw backend output in {out / workflow.RAW_CANDIDATES}",
              file=sys.stderr)
        return EXIT_NO_CANDIDATE
    workflow.write_manifest(out, "pipeline", cfg, backend)
    for m in report["models"]:
        c = m["confidence"][0]["c_total"] if m["confidence"] else None
        print(f"{m['rank']}. {m['latex']}  C_total={c if c is None else round(c, 4)}")
    print(f"report -> {out / workflow.REPORT_JSON}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _config(args)
    metrics = partial_f1(load_graph(_out(cfg)), load_graph(args.reference))
    print(json.dumps(metrics.to_dict(), indent=1, sort_keys=True))
    return EXIT_OK


def cmd_config(args):
    cfg = _config(args)
    text = dumps_config(cfg)
    if args.action == "show":
        print(text, end="")
    else:
        if not args.path:
            print("error: config init needs a path", file=sys.stderr)
            return EXIT_ERROR
        Path(args.path).write_text(text, encoding="utf-8")
        print(f"wrote {args.path}")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest, "build": cmd_build, "validate": cmd_validate, "embed": cmd_embed,
    "cluster": cmd_cluster, "query": cmd_query, "generate": cmd_generate, "fit": cmd_fit,
    "score": cmd_score, "pipeline": cmd_pipeline, "eval": cmd_eval, "config": cmd_config,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (AMKGError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
