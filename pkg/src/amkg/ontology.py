"""Minimal AM knowledge-graph schema and the structural rules R1-R6.

Entity and relation kinds are closed enumerations. ``validate_graph`` checks a
graph against the rule set and returns a report; it never raises on a
violation.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum

from .errors import EntityNameError, ValidationError


class EntityKind(str, Enum):
    EQUATION = "Equation"
    VARIABLE = "Variable"
    ASSUMPTION = "Assumption"
    PROCESS_PARAMETER = "ProcessParameter"
    PERFORMANCE = "Performance"
    REGIME = "Regime"
    MATERIAL = "Material"
    PHENOMENON = "Phenomenon"

    @classmethod
    def parse(cls, value) -> "EntityKind":
        if isinstance(value, cls):
            return value
        key = re.sub(r"[\s_]", "", str(value)).lower()
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise ValidationError(f"unknown entity kind {value!r}")


class RelationKind(str, Enum):
    HAS_INPUT = "has_input"
    HAS_OUTPUT = "has_output"
    INFLUENCES = "influences"
    REQUIRES_ASSUMPTION = "requires_assumption"
    VALID_IN_REGIME = "valid_in_regime"
    CORRESPONDS_TO = "corresponds_to"
    USES_MATERIAL = "uses_material"
    DERIVED_FROM = "derived_from"

    @classmethod
    def parse(cls, value) -> "RelationKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValidationError(f"unknown relation kind {value!r}") from None


VALID_SIGNS = (1, -1, 0)

# Rule identifiers, reported verbatim.
RULES = {
    "R1": "equation needs at least one has_input and one has_output",
    "R2": "influences relation must carry a sign in {+1, -1, 0}",
    "R3": "derived_from relations must be acyclic",
    "R4": "valid_in_regime must link Equation|ProcessParameter to Regime",
    "R5": "relation endpoint missing from entity set",
    "R6": "equation requires an assumption and its explicit negation",
}

NEGATION_PREFIX = "not_"

_GREEK = {
    "α": "alpha", "β": "beta", "γ": "gamma", "δ": "delta", "ε": "epsilon",
    "ϵ": "epsilon", "ζ": "zeta", "η": "eta", "θ": "theta", "ϑ": "theta",
    "ι": "iota", "κ": "kappa", "λ": "lambda", "μ": "mu", "ν": "nu",
    "ξ": "xi", "ο": "omicron", "π": "pi", "ρ": "rho", "σ": "sigma",
    "ς": "sigma", "τ": "tau", "υ": "upsilon", "φ": "phi", "ϕ": "phi",
    "χ": "chi", "ψ": "psi", "ω": "omega",
}


def normalize_entity_name(raw: str) -> str:
    """Canonical snake_case form of an entity name.

    Greek letters are spelled out, camelCase boundaries split, every run of
    non-alphanumerics collapses to one underscore.

    >>> normalize_entity_name("UV Exposure Time")
    'uv_exposure_time'
    >>> normalize_entity_name("θ_c")
    'theta_c'
    """
    if raw is None:
        raise EntityNameError("entity name is None")
    text = str(raw).strip()
    parts = []
    for ch in text:
        low = ch.lower()
        if low in _GREEK:
            parts.append(f" {_GREEK[low]} ")
        else:
            parts.append(ch)
    text = "".join(parts)
    # split camelCase / PascalCase words ("ProcessParameter" -> "Process Parameter")
    text = re.sub(r"(?<=[a-z0-9])(?=[A-Z][a-z])", " ", text)
    text = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode("ascii")
    text = re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")
    if not text:
        raise EntityNameError(f"name {raw!r} is empty after normalization")
    return text


_EQUALS = re.compile(r"(?<![<>!\\])=")
_OPERATOR = re.compile(
    r"[+\-*/^]|\\(?:frac|d?frac|t?frac|cdot|times|div|ln|log|exp|sqrt|sin|cos|tan|"
    r"sinh|cosh|tanh|sum|prod|int|partial|nabla|pm|mp)\b|\\left|\\right"
)


def validate_equation_latex(latex) -> bool:
    """True iff ``latex`` has an equality sign and at least one operator.

    A bare symbol ("D_p") or a pure renaming ("x = y") is not an equation.
    Subscripts written with ``_`` do not count as operators; juxtaposed
    operands count as multiplication.
    """
    if not isinstance(latex, str) or not latex.strip():
        return False
    if not _EQUALS.search(latex):
        return False
    sides = _EQUALS.split(latex)
    for side in sides:
        # parenthesised juxtaposition like "a(b)" is multiplication
        if _OPERATOR.search(side) or re.search(r"[\w})]\s*\(", side):
            return True
        # juxtaposed operands ("I t_e") are a product
        if re.search(r"[\w}]\s+\\?[A-Za-z]", side.strip()):
            return True
    return False


@dataclass(frozen=True)
class Violation:
    item: str
    rule: str
    message: str

    def to_dict(self):
        return {"item": self.item, "rule": self.rule, "message": self.message}


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def rules(self):
        return sorted(v.rule for v in self.violations)

    def to_dict(self):
        return {
            "is_valid": self.is_valid,
            "violations": [v.to_dict() for v in self.violations],
            "notes": list(self.notes),
        }

    def format_text(self) -> str:
        if self.is_valid:
            lines = ["graph valid: no violations"]
        else:
            lines = [f"{len(self.violations)} violation(s):"]
            lines += [f"  [{v.rule}] {v.item}: {v.message}" for v in self.violations]
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines)


def relation_id(rel) -> str:
    return f"{rel.subject} --{RelationKind(rel.predicate).value}--> {rel.object}"


def _find_cycles(edges):
    """Return one representative node list per strongly connected cycle."""
    graph = {}
    for s, o in edges:
        graph.setdefault(s, set()).add(o)
        graph.setdefault(o, set())
    index, low, onstack, stack, out = {}, {}, set(), [], []
    counter = [0]

    def strongconnect(v):
        # iterative Tarjan
        work = [(v, iter(sorted(graph[v])))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        onstack.add(v)
        while work:
            node, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    onstack.add(w)
                    work.append((w, iter(sorted(graph[w]))))
                    advanced = True
                    break
                if w in onstack:
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    onstack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                if len(comp) > 1 or node in graph[node]:
                    out.append(sorted(comp))

    for v in sorted(graph):
        if v not in index:
            strongconnect(v)
    return out


def validate_graph(kg) -> ValidationReport:
    """Check ``kg`` against rules R1-R6 and list every violation.

    ``kg`` is any object exposing ``entities`` (uri -> entity) and
    ``relations`` (iterable or mapping of relations).
    """
    entities = kg.entities
    relations = list(kg.relations.values()) if isinstance(kg.relations, dict) else list(kg.relations)
    relations.sort(key=lambda r: (r.subject, RelationKind(r.predicate).value, r.object))
    report = ValidationReport()

    # R5 first: later rules only consider resolvable relations
    resolved = []
    for rel in relations:
        missing = [u for u in (rel.subject, rel.object) if u not in entities]
        if missing:
            report.violations.append(
                Violation(relation_id(rel), "R5", f"unknown endpoint(s): {', '.join(missing)}")
            )
        else:
            resolved.append(rel)

    has_in, has_out = set(), set()
    for rel in resolved:
        pred = RelationKind(rel.predicate)
        if pred is RelationKind.HAS_INPUT:
            has_in.add(rel.subject)
        elif pred is RelationKind.HAS_OUTPUT:
            has_out.add(rel.subject)

    for uri in sorted(entities):
        if EntityKind(entities[uri].kind) is not EntityKind.EQUATION:
            continue
        lacking = [p for p, seen in (("has_input", has_in), ("has_output", has_out)) if uri not in seen]
        if lacking:
            report.violations.append(Violation(uri, "R1", "missing " + " and ".join(lacking)))

    derived = []
    requires = {}
    for rel in resolved:
        pred = RelationKind(rel.predicate)
        if pred is RelationKind.INFLUENCES:
            if rel.sign is None or rel.sign not in VALID_SIGNS:
                report.violations.append(Violation(relation_id(rel), "R2", "influences without a valid sign"))
        elif rel.sign is not None:
            report.violations.append(
                Violation(relation_id(rel), "R2", f"sign only allowed on influences, got {pred.value}")
            )
        if pred is RelationKind.DERIVED_FROM:
            derived.append((rel.subject, rel.object))
        elif pred is RelationKind.VALID_IN_REGIME:
            skind = EntityKind(entities[rel.subject].kind)
            okind = EntityKind(entities[rel.object].kind)
            if skind not in (EntityKind.EQUATION, EntityKind.PROCESS_PARAMETER) or okind is not EntityKind.REGIME:
                report.violations.append(
                    Violation(relation_id(rel), "R4", f"endpoint kinds {skind.value} -> {okind.value}")
                )
        elif pred is RelationKind.REQUIRES_ASSUMPTION:
            requires.setdefault(rel.subject, set()).add(entities[rel.object].name)

    for cycle in _find_cycles(derived):
        report.violations.append(Violation(" -> ".join(cycle), "R3", "derived_from cycle"))

    for eq_uri in sorted(requires):
        names = requires[eq_uri]
        for name in sorted(names):
            if name.startswith(NEGATION_PREFIX) and name[len(NEGATION_PREFIX):] in names:
                report.violations.append(
                    Violation(eq_uri, "R6", f"requires both {name[len(NEGATION_PREFIX):]} and {name}")
                )

    notes = getattr(kg, "notes", None)
    if notes:
        report.notes.extend(notes)
    return report
