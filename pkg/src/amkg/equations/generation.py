"""Candidate equations from a retrieved subgraph.

The backend receives the generation constraints as its system prompt and the
serialized subgraph as its user prompt, and answers with JSON
``{"candidates": [{"latex": ...}, ...]}``. Each candidate is parsed and
checked: it must define the target alone on the left, use every requested
input, and use no symbol outside the subgraph apart from ``k_<n>`` fit
parameters. Survivors are normalized and de-duplicated.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from ..errors import BackendError, NoCandidateError, ParseError
from ..ontology import EntityKind, normalize_entity_name
from .latex import Node, free_symbols, is_parameter, parse_latex, render_equation

log = logging.getLogger(__name__)

SCHEMA = "equation_candidates"
DEFAULT_M = 3

SYSTEM_PROMPT = """You compose candidate governing equations from a knowledge subgraph.
Every candidate must satisfy all of the following:
1. It expresses the target variable, alone on the left-hand side, as a function of the listed
   input variables, and every listed input appears on the right-hand side.
2. It uses only variables and symbols that occur in the provided subgraph. Introducing any other
   variable, symbol or physical concept is forbidden.
3. Every free (fitted) parameter is named k_1, k_2, ... in order of first appearance.
4. The reply is JSON only: {"candidates": [{"latex": "...", "rationale": "..."}]}, each latex a
   single-line equation using only + - * / ^, \\frac, \\ln, \\exp and parentheses."""


@dataclass
class CandidateEquation:
    latex: str
    target: str
    inputs: list
    parameters: list
    expression: Node
    source_latex: str = ""
    constants: list = field(default_factory=list)   # subgraph symbols fitted as parameters

    def to_dict(self):
        return {
            "latex": self.latex,
            "target": self.target,
            "inputs": list(self.inputs),
            "parameters": list(self.parameters),
            "constants": list(self.constants),
            "source_latex": self.source_latex,
            "expression": repr(self.expression),
        }


@dataclass
class Rejection:
    latex: str
    reason: str


def symbol_for(subgraph, name: str) -> str:
    """Equation symbol for a query variable (symbol, entity name, or corresponds_to partner)."""
    syms = subgraph.symbols()
    if name in syms:
        return name
    try:
        canon = normalize_entity_name(name)
    except Exception:
        return name
    by_uri = {e.uri: e for e in subgraph.entities}
    for e in subgraph.entities:
        if e.name == canon:
            if e.kind is EntityKind.VARIABLE and e.symbol:
                return e.symbol
            for r in subgraph.relations:
                other = r.object if r.subject == e.uri else r.subject if r.object == e.uri else None
                if other and r.predicate.value == "corresponds_to":
                    o = by_uri.get(other)
                    if o is not None and o.kind is EntityKind.VARIABLE and o.symbol:
                        return o.symbol
    return name


def user_prompt(subgraph, inputs, target, M) -> str:
    return (
        f"### TARGET\n{target}\n\n"
        f"### INPUTS\n{', '.join(inputs)}\n\n"
        f"### COUNT\n{M}\n\n"
        f"### ALLOWED SYMBOLS\n{', '.join(sorted(subgraph.symbols()))}\n\n"
        "### SUBGRAPH\n```json\n" + subgraph.dumps(indent=None) + "\n```\n\n"
        f"### TASK\nGenerate {M} candidate equations for {target} as a function of {', '.join(inputs)}."
    )


def _parse_reply(raw):
    from ..extraction.prompts import parse_json_payload

    data = parse_json_payload(raw)
    if isinstance(data, dict):
        data = data.get("candidates")
    if not isinstance(data, list):
        raise ValueError("reply lacks a candidates list")
    out = []
    for item in data:
        if isinstance(item, str):
            out.append(item)
        elif isinstance(item, dict) and isinstance(item.get("latex"), str):
            out.append(item["latex"])
    return out


def check_candidate(latex, target, inputs, allowed):
    """Parse and vet one candidate; returns a CandidateEquation or a Rejection."""
    try:
        eq = parse_latex(latex)
    except ParseError as exc:
        return Rejection(latex, f"parse error: {exc}")
    if eq.target is None:
        return Rejection(latex, "no single-symbol left-hand side")
    if eq.target != target:
        return Rejection(latex, f"defines {eq.target}, not {target}")
    variables, params = free_symbols(eq.rhs)
    if target in variables:
        return Rejection(latex, "target appears on the right-hand side")
    missing = [x for x in inputs if x not in variables]
    if missing:
        return Rejection(latex, f"missing input(s) {missing}")
    foreign = [v for v in variables if v not in allowed and not is_parameter(v)]
    if foreign:
        return Rejection(latex, f"symbol(s) outside the subgraph: {foreign}")
    constants = [v for v in variables if v not in inputs]
    return CandidateEquation(
        latex=render_equation(eq), target=target, inputs=list(inputs),
        parameters=list(params) + constants, expression=eq.rhs, source_latex=latex, constants=constants,
    )


def generate_candidates(subgraph, inputs, target, backend, M=DEFAULT_M, rejections=None) -> list:
    """Ask ``backend`` for ``M`` candidates and keep the ones that pass the checks."""
    if M < 1:
        raise ValueError("M must be >= 1")
    inputs = [symbol_for(subgraph, x) for x in inputs]
    target = symbol_for(subgraph, target)
    prompt = user_prompt(subgraph, inputs, target, M)
    raw, latexes = "", None
    for attempt in range(2):
        raw = backend.complete(SYSTEM_PROMPT, prompt, SCHEMA)
        try:
            latexes = _parse_reply(raw)
            break
        except ValueError as exc:
            log.warning("unparseable candidate reply (attempt %d): %s", attempt + 1, exc)
    if latexes is None:
        raise BackendError("candidate reply was not valid JSON after one retry")

    allowed = subgraph.symbols()
    out, seen = [], set()
    for latex in latexes:
        res = check_candidate(latex, target, inputs, allowed)
        if isinstance(res, Rejection):
            log.info("candidate rejected: %s (%s)", res.latex, res.reason)
            if rejections is not None:
                rejections.append(res)
            continue
        if res.latex in seen:
            continue
        seen.add(res.latex)
        out.append(res)
        if len(out) == M:
            break
    if not out:
        raise NoCandidateError("no candidate survived validation", raw=raw)
    return out


def dumps_candidates(cands) -> str:
    return json.dumps([c.to_dict() for c in cands], indent=1, sort_keys=True)
