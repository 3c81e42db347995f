"""Chunking, hints, LLM-backed entity/relation extraction and evaluation."""

from .chunking import Chunk, RegexTokenizer, TiktokenTokenizer, chunk_document, find_equations, get_tokenizer
from .extract import extract_entities, extract_relations, parse_sign
from .hints import HintSet, generate_hints
from .metrics import ExtractionMetrics, partial_f1
from .pipeline import BuildResult, build_graph, chunk_documents, read_documents

__all__ = [
    "Chunk", "RegexTokenizer", "TiktokenTokenizer", "chunk_document", "find_equations", "get_tokenizer",
    "extract_entities", "extract_relations", "parse_sign", "HintSet", "generate_hints",
    "ExtractionMetrics", "partial_f1", "BuildResult", "build_graph", "chunk_documents", "read_documents",
]
