"""Entity/relation store with URI deduplication and JSONL persistence.

Entities are keyed by ``amkg://<kind>/<name>``; relations by
``(subject, predicate, object)``. Repeated relation observations accumulate
as an integer weight. The graph is mutated in place by the ``upsert_*``
functions (single writer); readers may share it freely.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import EndpointError, NotFoundError, ValidationError
from .ontology import (
    NEGATION_PREFIX,
    EntityKind,
    RelationKind,
    ValidationReport,
    Violation,
    normalize_entity_name,
    relation_id,
    validate_equation_latex,
    validate_graph,
)

ENTITIES_FILE = "entities.jsonl"
RELATIONS_FILE = "relations.jsonl"


def make_uri(kind, name: str) -> str:
    return f"amkg://{EntityKind.parse(kind).value}/{name}"


@dataclass
class Entity:
    name: str
    kind: EntityKind
    description: str = ""
    latex: Optional[str] = None
    unit: Optional[str] = None
    symbol: Optional[str] = None
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        self.kind = EntityKind.parse(self.kind)
        self.name = normalize_entity_name(self.name)
        self.provenance = sorted(set(self.provenance))

    @property
    def uri(self) -> str:
        return make_uri(self.kind, self.name)

    def validate(self):
        if self.kind is EntityKind.EQUATION and not validate_equation_latex(self.latex):
            raise ValidationError(f"equation {self.name!r} has invalid latex {self.latex!r}")

    def to_dict(self):
        return {
            "uri": self.uri,
            "name": self.name,
            "kind": self.kind.value,
            "description": self.description,
            "latex": self.latex,
            "unit": self.unit,
            "symbol": self.symbol,
            "provenance": list(self.provenance),
        }

    @classmethod
    def from_dict(cls, d):
        ent = cls(
            name=d["name"],
            kind=d["kind"],
            description=d.get("description") or "",
            latex=d.get("latex"),
            unit=d.get("unit"),
            symbol=d.get("symbol"),
            provenance=d.get("provenance") or [],
        )
        if "uri" in d and d["uri"] != ent.uri:
            raise ValidationError(f"uri {d['uri']!r} does not match kind/name")
        return ent


@dataclass
class Relation:
    subject: str
    predicate: RelationKind
    object: str
    sign: Optional[int] = None
    weight: int = 1
    evidence: str = ""
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        self.predicate = RelationKind.parse(self.predicate)
        if self.sign is not None:
            self.sign = int(self.sign)
        if int(self.weight) < 1:
            raise ValidationError("relation weight must be >= 1")
        self.weight = int(self.weight)
        self.provenance = sorted(set(self.provenance))

    @property
    def key(self):
        return (self.subject, self.predicate.value, self.object)

    def to_dict(self):
        return {
            "subject": self.subject,
            "predicate": self.predicate.value,
            "object": self.object,
            "sign": self.sign,
            "weight": self.weight,
            "evidence": self.evidence,
            "provenance": list(self.provenance),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            subject=d["subject"],
            predicate=d["predicate"],
            object=d["object"],
            sign=d.get("sign"),
            weight=d.get("weight", 1),
            evidence=d.get("evidence") or "",
            provenance=d.get("provenance") or [],
        )


@dataclass
class KnowledgeGraph:
    entities: dict = field(default_factory=dict)
    relations: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def __len__(self):
        return len(self.entities)

    def get(self, uri) -> Entity:
        try:
            return self.entities[uri]
        except KeyError:
            raise NotFoundError(f"unknown entity {uri!r}") from None

    def iter_relations(self):
        for key in sorted(self.relations):
            yield self.relations[key]

    def by_kind(self, kind):
        kind = EntityKind.parse(kind)
        return [e for _, e in sorted(self.entities.items()) if e.kind is kind]

    def find(self, name, kind=None):
        """Entities whose canonical name (or raw symbol) matches ``name``."""
        try:
            canon = normalize_entity_name(name)
        except Exception:
            return []
        out = []
        for uri in sorted(self.entities):
            e = self.entities[uri]
            if kind is not None and e.kind is not EntityKind.parse(kind):
                continue
            if e.name == canon or (e.symbol is not None and e.symbol == name):
                out.append(e)
        return out

    def copy(self):
        return KnowledgeGraph(
            entities={u: Entity.from_dict(e.to_dict()) for u, e in self.entities.items()},
            relations={k: Relation.from_dict(r.to_dict()) for k, r in self.relations.items()},
            notes=list(self.notes),
        )

    def __eq__(self, other):
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return dumps_entities(self) == dumps_entities(other) and dumps_relations(self) == dumps_relations(other)


def _symbol_count(latex: str) -> int:
    body = re.sub(r"\\(left|right|frac|ln|log|exp|cdot|times|sqrt)\b", " ", latex)
    body = re.sub(r"\\[A-Za-z]+", lambda m: m.group(0)[1:], body)
    symbols = re.findall(r"[A-Za-z][A-Za-z0-9]*(?:_\{[^}]*\}|_[A-Za-z0-9]+)?", body)
    return len(set(symbols))


def latex_completeness_key(latex: str):
    """Sort key: more distinct symbols, then longer, then lexicographically smaller."""
    return (_symbol_count(latex), len(latex), tuple(-ord(c) for c in latex))


def upsert_entity(kg: KnowledgeGraph, e: Entity) -> KnowledgeGraph:
    """Insert ``e`` or merge it into the stored entity with the same URI."""
    e.validate()
    uri = e.uri
    current = kg.entities.get(uri)
    if current is None:
        kg.entities[uri] = Entity.from_dict(e.to_dict())
        return kg
    if e.description and e.description not in current.description.split(" | "):
        current.description = (
            f"{current.description} | {e.description}" if current.description else e.description
        )
    current.provenance = sorted(set(current.provenance) | set(e.provenance))
    if current.kind is EntityKind.EQUATION and e.latex and e.latex != current.latex:
        if latex_completeness_key(e.latex) > latex_completeness_key(current.latex):
            current.latex = e.latex
    for attr in ("unit", "symbol", "latex"):
        if getattr(current, attr) is None and getattr(e, attr) is not None:
            setattr(current, attr, getattr(e, attr))
    return kg


def upsert_relation(kg: KnowledgeGraph, r: Relation) -> KnowledgeGraph:
    """Insert ``r`` or add one observation to an existing triple."""
    for uri in (r.subject, r.object):
        if uri not in kg.entities:
            raise EndpointError(f"relation endpoint {uri!r} not in graph")
    current = kg.relations.get(r.key)
    if current is None:
        kg.relations[r.key] = Relation.from_dict(r.to_dict())
        return kg
    current.weight += 1
    current.provenance = sorted(set(current.provenance) | set(r.provenance))
    if current.predicate is RelationKind.INFLUENCES and r.sign is not None and r.sign != current.sign:
        if current.sign is None:
            current.sign = r.sign
        else:
            note = f"sign conflict on {relation_id(current)}: kept {current.sign:+d}, saw {r.sign:+d}"
            if note not in kg.notes:
                kg.notes.append(note)
    return kg


def neighbors(kg: KnowledgeGraph, uri: str, predicates=None):
    """Relations incident to ``uri`` in either direction, with the other endpoint."""
    if uri not in kg.entities:
        raise NotFoundError(f"unknown entity {uri!r}")
    if predicates is not None:
        if isinstance(predicates, (str, RelationKind)):
            predicates = [predicates]
        predicates = {RelationKind.parse(p) for p in predicates}
    out = []
    for rel in kg.relations.values():
        if predicates is not None and rel.predicate not in predicates:
            continue
        if rel.subject == uri:
            other = rel.object
        elif rel.object == uri:
            other = rel.subject
        else:
            continue
        if other in kg.entities:
            out.append((rel, kg.entities[other]))
    out.sort(key=lambda pair: (pair[1].uri, pair[0].predicate.value, pair[0].subject))
    return out


def post_process(kg: KnowledgeGraph):
    """Drop everything violating R1-R5 (and conflicting R6 pairs) until clean.

    Returns a new graph plus a report itemizing every removal.
    """
    out = kg.copy()
    removed = ValidationReport(notes=list(kg.notes))
    while True:
        report = validate_graph(out)
        if report.is_valid:
            break
        for v in report.violations:
            removed.violations.append(v)
            if v.rule == "R1":
                _drop_entity(out, v.item)
            elif v.rule in ("R2", "R4", "R5"):
                _drop_relation_by_id(out, v.item)
            elif v.rule == "R3":
                members = set(v.item.split(" -> "))
                for key in [k for k, r in out.relations.items()
                            if r.predicate is RelationKind.DERIVED_FROM
                            and r.subject in members and r.object in members]:
                    del out.relations[key]
            elif v.rule == "R6":
                requires = RelationKind.REQUIRES_ASSUMPTION.value
                conflicted = set()
                for r in out.relations.values():
                    if r.subject == v.item and r.predicate is RelationKind.REQUIRES_ASSUMPTION:
                        conflicted.add(out.entities[r.object].name)
                pairs = {n for n in conflicted if n.startswith(NEGATION_PREFIX) and n[4:] in conflicted}
                names = pairs | {n[len(NEGATION_PREFIX):] for n in pairs}
                for key in [k for k, r in out.relations.items()
                            if r.subject == v.item and k[1] == requires
                            and out.entities[r.object].name in names]:
                    del out.relations[key]
    out.notes = []
    return out, removed


def _drop_entity(kg, uri):
    kg.entities.pop(uri, None)
    for key in [k for k in kg.relations if uri in (k[0], k[2])]:
        del kg.relations[key]


def _drop_relation_by_id(kg, rid):
    for key, rel in list(kg.relations.items()):
        if relation_id(rel) == rid:
            del kg.relations[key]


# -- persistence -------------------------------------------------------------

def _line(d):
    return json.dumps(d, sort_keys=True, ensure_ascii=False)


def dumps_entities(kg) -> str:
    return "".join(_line(kg.entities[u].to_dict()) + "\n" for u in sorted(kg.entities))


def dumps_relations(kg) -> str:
    return "".join(_line(kg.relations[k].to_dict()) + "\n" for k in sorted(kg.relations))


def save(kg: KnowledgeGraph, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / ENTITIES_FILE).write_text(dumps_entities(kg), encoding="utf-8")
    (directory / RELATIONS_FILE).write_text(dumps_relations(kg), encoding="utf-8")


def load(directory) -> KnowledgeGraph:
    directory = Path(directory)
    kg = KnowledgeGraph()
    with open(directory / ENTITIES_FILE, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                ent = Entity.from_dict(json.loads(line))
                kg.entities[ent.uri] = ent
    rel_path = directory / RELATIONS_FILE
    if rel_path.exists():
        with open(rel_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rel = Relation.from_dict(json.loads(line))
                    kg.relations[rel.key] = rel
    return kg


__all__ = [
    "Entity", "Relation", "KnowledgeGraph", "Violation", "make_uri",
    "upsert_entity", "upsert_relation", "neighbors", "post_process",
    "save", "load", "dumps_entities", "dumps_relations", "latex_completeness_key",
]
