"""Subgraph retrieval for equation generation.

A query names input variables X and optionally a target y. Retrieval takes
the top-k entities by cosine similarity to the embedded query, forces in the
entities for X and y, expands through the lowest common hierarchy cluster of
those seeds and their one-hop relation neighbours, and labels the equations
it finds as target, input-related or supporting.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .embedding import cosine_matrix, embed_text
from .equations.latex import extract_symbols
from .errors import QueryError, RetrievalError
from .hierarchy import ROOT, lca
from .kg_store import Entity, Relation
from .ontology import EntityKind, RelationKind, normalize_entity_name

log = logging.getLogger(__name__)

TARGET = "target"
INPUT_RELATED = "input_related"
SUPPORTING = "supporting"
SUPPORT_HOPS = 2
MAX_ENTITIES = 200


@dataclass
class Query:
    inputs: list
    target: Optional[str] = None
    natural_text: Optional[str] = None

    def __post_init__(self):
        self.inputs = [str(x) for x in (self.inputs or [])]
        if not self.inputs:
            raise QueryError("query needs at least one input variable")

    @property
    def text(self) -> str:
        return build_query(self.inputs, self.target, self.natural_text)


def build_query(inputs, target=None, natural_text=None) -> str:
    if not inputs:
        raise QueryError("query needs at least one input variable")
    if natural_text:
        return natural_text
    names = list(inputs) + ([target] if target else [])
    return f"equations and mechanisms {', '.join(names)} in additive manufacturing"


@dataclass
class Subgraph:
    entities: list
    relations: list
    roles: dict = field(default_factory=dict)
    summaries: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def entity(self, uri) -> Entity:
        for e in self.entities:
            if e.uri == uri:
                return e
        raise KeyError(uri)

    def uris(self):
        return {e.uri for e in self.entities}

    def equations(self, role=None):
        return [e for e in self.entities
                if e.kind is EntityKind.EQUATION and (role is None or self.roles.get(e.uri) == role)]

    def symbols(self) -> set:
        """Every symbol the subgraph makes available to candidate equations."""
        out = set()
        for e in self.entities:
            if e.kind is EntityKind.VARIABLE:
                out.add(e.symbol or e.name)
            if e.latex:
                out.update(extract_symbols(e.latex))
        return out

    def to_dict(self):
        return {
            "entities": [e.to_dict() for e in sorted(self.entities, key=lambda e: e.uri)],
            "relations": [r.to_dict() for r in sorted(self.relations, key=lambda r: r.key)],
            "roles": dict(sorted(self.roles.items())),
            "summaries": dict(sorted(self.summaries.items())),
            "metadata": self.metadata,
        }

    def dumps(self, indent=1) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d):
        return cls(
            entities=[Entity.from_dict(e) for e in d["entities"]],
            relations=[Relation.from_dict(r) for r in d["relations"]],
            roles=dict(d.get("roles", {})),
            summaries=dict(d.get("summaries", {})),
            metadata=dict(d.get("metadata", {})),
        )


def resolve_variable(kg, name: str) -> Optional[str]:
    """uri for a query variable: Variable by symbol, then by canonical name, then any kind."""
    variables = kg.by_kind(EntityKind.VARIABLE)
    for e in variables:
        if e.symbol == name:
            return e.uri
    try:
        canon = normalize_entity_name(name)
    except Exception:
        return None
    for e in variables:
        if e.name == canon:
            return e.uri
    for uri in sorted(kg.entities):
        if kg.entities[uri].name == canon:
            return uri
    return None


def _counterparts(kg, uris):
    """``uris`` plus entities linked to them by corresponds_to (either direction)."""
    out = set(uris)
    for rel in kg.relations.values():
        if rel.predicate is RelationKind.CORRESPONDS_TO:
            if rel.subject in uris:
                out.add(rel.object)
            if rel.object in uris:
                out.add(rel.subject)
    return out


def assign_equation_roles(entities, relations, x_uris, y_uris=None) -> dict:
    """Label each equation target, input_related or supporting (or leave it out).

    ``y_uris`` may be one uri or a collection (a target and its counterparts).
    """
    eqs = sorted(e.uri for e in entities if e.kind is EntityKind.EQUATION)
    eq_set = set(eqs)
    x_uris = set(x_uris)
    if y_uris is None:
        y_uris = set()
    elif isinstance(y_uris, str):
        y_uris = {y_uris}
    else:
        y_uris = set(y_uris)
    roles = {}
    for rel in relations:
        if rel.predicate is RelationKind.HAS_OUTPUT and rel.subject in eq_set and rel.object in y_uris:
            roles[rel.subject] = TARGET
    for rel in relations:
        if rel.predicate in (RelationKind.HAS_INPUT, RelationKind.INFLUENCES):
            for eq, other in ((rel.subject, rel.object), (rel.object, rel.subject)):
                if eq in eq_set and other in x_uris and eq not in roles:
                    roles[eq] = INPUT_RELATED

    # equation-to-equation links: shared variables or derived_from
    var_eqs = defaultdict(set)
    links = defaultdict(set)
    for rel in relations:
        if rel.predicate in (RelationKind.HAS_INPUT, RelationKind.HAS_OUTPUT) and rel.subject in eq_set:
            var_eqs[rel.object].add(rel.subject)
        if rel.predicate is RelationKind.DERIVED_FROM and rel.subject in eq_set and rel.object in eq_set:
            links[rel.subject].add(rel.object)
            links[rel.object].add(rel.subject)
    for group in var_eqs.values():
        for a in group:
            links[a].update(group - {a})

    frontier = sorted(roles)
    seen = set(frontier)
    for _ in range(SUPPORT_HOPS):
        nxt = []
        for eq in frontier:
            for other in sorted(links[eq]):
                if other not in seen:
                    seen.add(other)
                    nxt.append(other)
                    roles[other] = SUPPORTING
        frontier = nxt
    return dict(sorted(roles.items()))


def retrieve(kg, hierarchy, embeddings, query: Query, text_backend, k=10,
             max_entities=MAX_ENTITIES) -> Subgraph:
    if not kg.entities:
        raise RetrievalError("knowledge graph is empty")
    uris = sorted(kg.entities)
    matrix = np.vstack([embeddings[u] for u in uris])
    formula_dim = matrix.shape[1] - text_backend.dim
    qvec = embed_text(query.text, text_backend, formula_dim=formula_dim).fused
    sims = cosine_matrix(np.vstack([qvec, matrix]))[0, 1:]
    sim_of = dict(zip(uris, (float(s) for s in sims)))
    ranked = sorted(uris, key=lambda u: (-sim_of[u], u))
    top = ranked[:k]

    warnings = []
    x_uris, y_uri = [], None
    for name in query.inputs:
        u = resolve_variable(kg, name)
        if u is None:
            warnings.append(f"unresolved input variable {name!r}")
        else:
            x_uris.append(u)
    if query.target:
        y_uri = resolve_variable(kg, query.target)
        if y_uri is None:
            warnings.append(f"unresolved target variable {query.target!r}")
    forced = set(x_uris) | ({y_uri} if y_uri else set())
    seeds = sorted(set(top) | forced)

    lca_id, lca_layer = (ROOT, None)
    expansion = set()
    if hierarchy is not None:
        lca_id, lca_layer = lca(hierarchy, seeds)
        if lca_id != ROOT:
            expansion.update(hierarchy.descendants(lca_id))
    for rel in kg.relations.values():
        if rel.subject in seeds:
            expansion.add(rel.object)
        if rel.object in seeds:
            expansion.add(rel.subject)

    members = set(seeds) | expansion
    truncated = False
    if len(members) > max_entities:
        order = sorted(members, key=lambda u: (u not in forced, -sim_of[u], u))
        members = set(order[:max_entities])
        truncated = True

    entities = [kg.entities[u] for u in sorted(members)]
    relations = [r for r in kg.iter_relations() if r.subject in members and r.object in members]
    x_all = _counterparts(kg, set(x_uris)) & members
    y_all = sorted(_counterparts(kg, {y_uri}) & members) if y_uri else []
    roles = assign_equation_roles(entities, relations, x_all, y_all)

    summaries = {}
    if hierarchy is not None:
        cluster_ids = set()
        if lca_id != ROOT:
            cluster_ids.update(hierarchy.descendant_clusters(lca_id))
        for u in seeds:
            cluster_ids.update(hierarchy.ancestors(u))
        for cid in sorted(cluster_ids):
            c = hierarchy.clusters[cid]
            summaries[cid] = {"layer": c.layer, "summary": c.summary}

    kinds = Counter(e.kind.value for e in entities)
    metadata = {
        "query": query.text,
        "inputs": list(query.inputs),
        "target": query.target,
        "resolved_inputs": x_uris,
        "resolved_target": y_uri,
        "target_counterparts": y_all,
        "k": k,
        "seeds": seeds,
        "lca": {"id": lca_id, "layer": lca_layer},
        "counts_by_kind": dict(sorted(kinds.items())),
        "counts_by_role": dict(sorted(Counter(roles.values()).items())),
        "n_entities": len(entities),
        "n_relations": len(relations),
        "truncated": truncated,
        "warnings": warnings,
    }
    return Subgraph(entities, relations, roles, summaries, metadata)
