"""Two-stage extraction: entities first, then relations among those entities."""

from __future__ import annotations

import logging

from ..errors import AMKGError, ExtractionError
from ..kg_store import Entity, Relation
from ..ontology import EntityKind, RelationKind, normalize_entity_name, validate_equation_latex
from . import prompts

log = logging.getLogger(__name__)

_SIGN_WORDS = {
    "+": 1, "+1": 1, "1": 1, "positive": 1, "increase": 1, "increases": 1, "up": 1,
    "-": -1, "-1": -1, "−": -1, "−1": -1, "negative": -1, "decrease": -1, "decreases": -1,
    "down": -1, "0": 0, "none": 0, "neutral": 0, "zero": 0,
}


def parse_sign(value):
    """Map a sign given as number or word to -1/0/+1; None when absent or unreadable."""
    if value is None or isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return {1: 1, -1: -1, 0: 0}.get(int(value)) if float(value) in (1.0, -1.0, 0.0) else None
    return _SIGN_WORDS.get(str(value).strip().lower())


def _complete_json(backend, system, user, schema, expect):
    """Call the backend, retrying once when the reply is not valid JSON of type ``expect``."""
    raw = ""
    for attempt in range(2):
        raw = backend.complete(system, user, schema)
        try:
            data = prompts.parse_json_payload(raw)
        except ValueError:
            log.warning("unparseable %s reply (attempt %d)", schema, attempt + 1)
            continue
        if isinstance(data, dict):
            for key in (schema, "items", "results"):
                if isinstance(data.get(key), list):
                    data = data[key]
                    break
        if isinstance(data, expect):
            return data
        log.warning("%s reply has wrong shape (attempt %d)", schema, attempt + 1)
    raise ExtractionError(f"could not parse {schema} reply after retry", raw=raw)


def _record_to_entities(rec, chunk_id):
    """One response record -> entities (an equation record also yields its variables)."""
    if not isinstance(rec, dict) or not rec.get("name") or not rec.get("type"):
        raise ValueError("record lacks name/type")
    kind = EntityKind.parse(rec["type"])
    raw_name = str(rec["name"])
    symbol = rec.get("symbol")
    if kind is EntityKind.VARIABLE and not symbol:
        symbol = raw_name
    latex = rec.get("latex")
    if kind is EntityKind.EQUATION and not validate_equation_latex(latex):
        raise ValueError(f"equation {raw_name!r} lacks valid latex")
    unit = rec.get("unit")
    ent = Entity(
        name=normalize_entity_name(raw_name),
        kind=kind,
        description=str(rec.get("description") or ""),
        latex=latex if kind is EntityKind.EQUATION else None,
        unit=str(unit) if unit not in (None, "") else None,
        symbol=str(symbol) if symbol else None,
        provenance=[chunk_id],
    )
    out = [ent]
    if kind is EntityKind.EQUATION:
        for var in rec.get("variables") or []:
            if isinstance(var, dict) and var.get("symbol"):
                sym = str(var["symbol"])
                out.append(Entity(
                    name=normalize_entity_name(sym), kind=EntityKind.VARIABLE,
                    description=str(var.get("description") or ""), symbol=sym, provenance=[chunk_id],
                ))
    return out


def extract_entities(chunk, hints, backend, warnings=None) -> list:
    """Stage 1: prompt the backend and map its records to validated entities.

    Malformed records are dropped and counted in ``warnings`` (a list that
    receives one message per dropped record).
    """
    if not chunk.text.strip():
        return []
    user = prompts.entity_user_prompt(chunk, hints)
    records = _complete_json(backend, prompts.ENTITY_SYSTEM, user, prompts.ENTITY_SCHEMA, list)
    entities = {}
    explicit = set()
    for rec in records:
        try:
            produced = _record_to_entities(rec, chunk.id)
        except (ValueError, AMKGError) as exc:
            msg = f"{chunk.id}: dropped entity record {rec!r}: {exc}"
            log.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            continue
        head, derived = produced[0], produced[1:]
        if head.uri in entities and head.uri not in explicit:
            # an explicit record beats a variable derived from an equation listing
            entities[head.uri] = head
        entities.setdefault(head.uri, head)
        explicit.add(head.uri)
        for ent in derived:
            entities.setdefault(ent.uri, ent)
    return list(entities.values())


def _resolve(name, entities):
    if name is None:
        return None
    raw = str(name).strip()
    for e in entities:
        if e.name == raw or (e.symbol is not None and e.symbol == raw) or e.uri == raw:
            return e
    try:
        canon = normalize_entity_name(raw)
    except AMKGError:
        return None
    for e in entities:
        if e.name == canon:
            return e
    return None


def extract_relations(chunk, entities, backend, warnings=None) -> list:
    """Stage 2: relations restricted to ``entities`` and to ontology predicates."""
    entities = list(entities)
    if not entities:
        return []
    user = prompts.relation_user_prompt(chunk, entities)
    records = _complete_json(backend, prompts.RELATION_SYSTEM, user, prompts.RELATION_SCHEMA, list)
    out = {}

    def drop(rec, why):
        msg = f"{chunk.id}: dropped relation {rec!r}: {why}"
        log.info(msg)
        if warnings is not None:
            warnings.append(msg)

    for rec in records:
        if not isinstance(rec, dict):
            drop(rec, "not an object")
            continue
        try:
            pred = RelationKind.parse(rec.get("predicate"))
        except AMKGError:
            drop(rec, "unknown predicate")
            continue
        s, o = _resolve(rec.get("subject"), entities), _resolve(rec.get("object"), entities)
        if s is None or o is None:
            drop(rec, "endpoint not in entity list")
            continue
        sign = parse_sign(rec.get("sign"))
        if pred is RelationKind.INFLUENCES:
            if sign is None:
                drop(rec, "influences without sign")
                continue
        else:
            sign = None
        rel = Relation(s.uri, pred, o.uri, sign=sign, evidence=str(rec.get("evidence") or chunk.id),
                       provenance=[chunk.id])
        if rel.key not in out:
            out[rel.key] = rel
    return list(out.values())


__all__ = ["extract_entities", "extract_relations", "parse_sign"]
