"""Candidate equation parsing, compilation, fitting and generation."""

from .latex import Node, ParsedEquation, free_symbols, parse_latex, render, render_equation
from .compile import Evaluator, compile_expression
from .fitting import Dataset, FitResult, fit, predict, read_csv
from .generation import CandidateEquation, generate_candidates

__all__ = [
    "Node", "ParsedEquation", "parse_latex", "render", "render_equation", "free_symbols",
    "Evaluator", "compile_expression", "Dataset", "FitResult", "fit", "predict", "read_csv",
    "CandidateEquation", "generate_candidates",
]
