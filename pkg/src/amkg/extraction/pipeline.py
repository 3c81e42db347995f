"""Documents -> chunks -> hints -> entities -> relations -> merged, validated graph."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import AMKGError
from ..kg_store import KnowledgeGraph, post_process, upsert_entity, upsert_relation
from ..ontology import ValidationReport, validate_graph
from .chunking import chunk_document
from .extract import extract_entities, extract_relations
from .hints import HINT_TOKEN_CAP, generate_hints

log = logging.getLogger(__name__)


@dataclass
class BuildResult:
    raw: KnowledgeGraph               # merged graph before rule enforcement
    graph: KnowledgeGraph             # post-processed graph
    removed: ValidationReport         # everything post-processing dropped
    final: ValidationReport           # re-validation of ``graph``
    chunks: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return self.final.is_valid


def read_documents(paths):
    """``[(source name, text)]`` for markdown files or directories of them."""
    docs = []
    for p in paths:
        p = Path(p)
        files = sorted(p.glob("*.md")) if p.is_dir() else [p]
        for f in files:
            docs.append((f.name, f.read_text(encoding="utf-8")))
    return docs


def chunk_documents(docs, tokenizer=None, max_tokens=1024):
    chunks = []
    for source, text in docs:
        chunks.extend(chunk_document(text, tokenizer=tokenizer, max_tokens=max_tokens, source=source))
    return chunks


def _extract_chunk(chunk, backend, tokenizer, hint_cap=HINT_TOKEN_CAP):
    warnings = []
    hints = generate_hints(chunk, tokenizer, cap=hint_cap)
    entities = extract_entities(chunk, hints, backend, warnings)
    relations = extract_relations(chunk, entities, backend, warnings) if entities else []
    return entities, relations, warnings


def build_graph(docs, backend, tokenizer=None, jobs=1, max_tokens=1024,
                hint_cap=HINT_TOKEN_CAP) -> BuildResult:
    """Run extraction over ``docs`` and merge the results in chunk order.

    Chunks may be processed concurrently; merging is sequential, so the
    output does not depend on ``jobs``.
    """
    chunks = chunk_documents(docs, tokenizer, max_tokens)
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda c: _extract_chunk(c, backend, tokenizer, hint_cap), chunks))
    else:
        results = [_extract_chunk(c, backend, tokenizer, hint_cap) for c in chunks]

    kg = KnowledgeGraph()
    warnings = []
    for chunk, (entities, relations, w) in zip(chunks, results):
        warnings.extend(w)
        for e in entities:
            try:
                upsert_entity(kg, e)
            except AMKGError as exc:
                warnings.append(f"{chunk.id}: entity {e.uri} rejected: {exc}")
        for r in relations:
            try:
                upsert_relation(kg, r)
            except AMKGError as exc:
                warnings.append(f"{chunk.id}: relation rejected: {exc}")
    clean, removed = post_process(kg)
    final = validate_graph(clean)
    return BuildResult(kg, clean, removed, final, chunks, warnings)
