"""Multi-layer clustering of the knowledge graph.

Layer 0 is the entity set itself. Layer 1 consists of equation-centric
clusters (an equation with its adjacent variables and assumptions) plus
Louvain communities over everything else on a hybrid graph mixing relation
edges and embedding-similarity edges. Each cluster gets a centroid, a
one-sentence summary and a text-only embedding of that summary; higher layers
re-cluster the previous layer's clusters the same way until fewer than
``theta_stop`` remain.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .embedding import FORMULA_DIM, cosine_matrix, embed_text, require
from .errors import AMKGError, BackendError, NotFoundError
from .louvain import louvain
from .ontology import EntityKind, RelationKind

log = logging.getLogger(__name__)

HIERARCHY_FILE = "hierarchy.json"
SUMMARY_CAP = 200
ROOT = "ROOT"

# label precedence when relation counts tie between cluster pairs
_LABEL_PRECEDENCE = ["has_input", "has_output", "influences"]

SUMMARY_SYSTEM = (
    "You summarize clusters of an additive-manufacturing knowledge graph. "
    "Reply with JSON {\"summary\": \"...\"} holding one plain sentence of at most "
    f"{SUMMARY_CAP} characters that states what the members have in common."
)


@dataclass
class HierarchyParams:
    alpha: float = 0.6
    theta_sim: float = 0.7
    k: int = 10
    theta_stop: int = 20
    min_equation_cluster: int = 3
    resolution: float = 1.0
    seed: int = 0
    max_layers: int = 10


@dataclass
class HybridGraph:
    nodes: list
    edges: dict                      # (i, j) with i < j -> weight
    kinds: dict = field(default_factory=dict)  # (i, j) -> "relation" | "similarity"

    def weight(self, a, b) -> float:
        return self.edges.get((a, b) if a < b else (b, a), 0.0)

    def kind(self, a, b):
        return self.kinds.get((a, b) if a < b else (b, a))

    def subgraph(self, keep) -> "HybridGraph":
        keep = set(keep)
        edges = {e: w for e, w in self.edges.items() if e[0] in keep and e[1] in keep}
        return HybridGraph([n for n in self.nodes if n in keep], edges,
                           {e: self.kinds[e] for e in edges})


@dataclass
class Cluster:
    id: str
    layer: int
    members: list
    kind: str                        # "equation_centric" | "community"
    centroid: np.ndarray
    summary: str = ""
    embedding: Optional[np.ndarray] = None
    summary_fallback: bool = False
    equation: Optional[str] = None

    def to_dict(self):
        return {
            "id": self.id,
            "layer": self.layer,
            "kind": self.kind,
            "members": list(self.members),
            "equation": self.equation,
            "summary": self.summary,
            "summary_fallback": self.summary_fallback,
            "centroid": [float(x) for x in self.centroid],
            "embedding": [float(x) for x in self.embedding],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            id=d["id"], layer=d["layer"], members=list(d["members"]), kind=d["kind"],
            centroid=np.asarray(d["centroid"], dtype=float), summary=d["summary"],
            embedding=np.asarray(d["embedding"], dtype=float),
            summary_fallback=d.get("summary_fallback", False), equation=d.get("equation"),
        )


@dataclass
class Hierarchy:
    entities: list                   # layer 0
    layers: list                     # layers[0] is layer 1: list of Cluster
    params: HierarchyParams = field(default_factory=HierarchyParams)
    louvain_history: list = field(default_factory=list)

    def __post_init__(self):
        self._index()

    def _index(self):
        self.clusters = {c.id: c for layer in self.layers for c in layer}
        self.parent = {}
        for layer in self.layers:
            for c in layer:
                for m in c.members:
                    self.parent[m] = c.id

    @property
    def depth(self) -> int:
        return len(self.layers)

    def layer(self, n: int):
        if n == 0:
            return list(self.entities)
        return self.layers[n - 1]

    def descendants(self, cluster_id) -> list:
        """Layer-0 entity uris beneath ``cluster_id``."""
        if cluster_id == ROOT:
            return list(self.entities)
        c = self.clusters[cluster_id]
        if c.layer == 1:
            return list(c.members)
        out = []
        for child in c.members:
            out.extend(self.descendants(child))
        return sorted(out)

    def descendant_clusters(self, cluster_id) -> list:
        if cluster_id == ROOT:
            return sorted(self.clusters)
        c = self.clusters[cluster_id]
        out = [cluster_id]
        if c.layer > 1:
            for child in c.members:
                out.extend(self.descendant_clusters(child))
        return out

    def ancestors(self, uri) -> list:
        """Cluster ids containing ``uri``, from layer 1 upward."""
        if uri not in self.parent:
            raise NotFoundError(f"{uri!r} is not in the hierarchy")
        out = []
        node = uri
        while node in self.parent:
            node = self.parent[node]
            out.append(node)
        return out

    def to_dict(self):
        return {
            "params": asdict(self.params),
            "seed": self.params.seed,
            "entities": list(self.entities),
            "louvain_history": [[float(q) for q in h] for h in self.louvain_history],
            "layers": [[c.to_dict() for c in layer] for layer in self.layers],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, path):
        path = Path(path)
        if path.is_dir():
            path = path / HIERARCHY_FILE
        path.write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.is_dir():
            path = path / HIERARCHY_FILE
        d = json.loads(path.read_text(encoding="utf-8"))
        return cls(
            entities=list(d["entities"]),
            layers=[[Cluster.from_dict(c) for c in layer] for layer in d["layers"]],
            params=HierarchyParams(**d["params"]),
            louvain_history=d.get("louvain_history", []),
        )


# -- graph construction --------------------------------------------------------

def _pair(a, b):
    return (a, b) if a < b else (b, a)


def relation_counts(kg) -> Counter:
    """Observed relations per unordered entity pair, summed over relation types."""
    counts = Counter()
    for rel in kg.relations.values():
        if rel.subject != rel.object:
            counts[_pair(rel.subject, rel.object)] += rel.weight
    return counts


def _hybrid(units, vectors, counts, alpha, k, theta_sim):
    """Relation edges (alpha * count) plus kNN similarity edges on the rest."""
    units = list(units)
    edges = {}
    kinds = {}
    for (a, b), n in counts.items():
        if n > 0:
            edges[(a, b)] = alpha * n
            kinds[(a, b)] = "relation"
    if len(units) > 1 and k > 0:
        sims = cosine_matrix(np.vstack([vectors[u] for u in units]))
        idx = np.arange(len(units))
        for i in idx:
            # nearest first; stable sort over uri order makes lower uri win ties
            order = [j for j in np.argsort(-sims[i], kind="stable") if j != i][:k]
            for j in order:
                a, b = _pair(units[i], units[j])
                s = float(sims[i, j])
                if s >= theta_sim and (a, b) not in edges:
                    edges[(a, b)] = (1 - alpha) * s
                    kinds[(a, b)] = "similarity"
    return HybridGraph(units, dict(sorted(edges.items())), dict(sorted(kinds.items())))


def build_hybrid_graph(kg, embeddings, alpha=0.6, k=10, theta_sim=0.7) -> HybridGraph:
    uris = sorted(kg.entities)
    vectors = {u: require(embeddings, u) for u in uris}
    return _hybrid(uris, vectors, relation_counts(kg), alpha, k, theta_sim)


# -- layer 1 -----------------------------------------------------------------

def equation_centric_preclusters(kg, min_size=3) -> list:
    """Equation plus adjacent Variables/Assumptions; shared members go to the
    equation with the most relations to them (ties: lower equation uri).

    Returns ``(equation_uri, sorted member uris)`` pairs in equation-uri order.
    """
    eligible = {EntityKind.VARIABLE, EntityKind.ASSUMPTION}
    links = defaultdict(Counter)     # member -> equation -> relation count
    for rel in kg.relations.values():
        s, o = kg.entities.get(rel.subject), kg.entities.get(rel.object)
        if s is None or o is None:
            continue
        if s.kind is EntityKind.EQUATION and o.kind in eligible:
            links[o.uri][s.uri] += 1
        elif o.kind is EntityKind.EQUATION and s.kind in eligible:
            links[s.uri][o.uri] += 1
    owned = defaultdict(list)
    for member, eqs in links.items():
        best = min(eqs, key=lambda q: (-eqs[q], q))
        owned[best].append(member)
    out = []
    for eq in sorted(e.uri for e in kg.by_kind(EntityKind.EQUATION)):
        members = sorted([eq] + owned.get(eq, []))
        if len(members) >= min_size:
            out.append((eq, members))
    return out


# -- summaries ---------------------------------------------------------------

def _representatives(member_vectors: dict, centroid, n):
    names = sorted(member_vectors)
    if not names:
        return []
    sims = cosine_matrix(np.vstack([centroid] + [member_vectors[m] for m in names]))[0, 1:]
    order = sorted(range(len(names)), key=lambda i: (-sims[i], names[i]))
    return [names[i] for i in order[:n]]


def _cap(text: str) -> str:
    text = " ".join(text.split())
    if len(text) <= SUMMARY_CAP:
        return text
    cut = text[:SUMMARY_CAP - 3].rsplit(" ", 1)[0]
    return cut + "..."


def summary_prompt(lines) -> str:
    return "### CLUSTER MEMBERS\n" + "\n".join(f"- {ln}" for ln in lines) + "\n\nSummarize this cluster."


def summarize(backend, lines, fallback_names):
    """One-sentence summary via ``backend``; falls back to top member names."""
    try:
        raw = backend.complete(SUMMARY_SYSTEM, summary_prompt(lines), "cluster_summary")
        text = raw.strip()
        if text.startswith("{"):
            text = str(json.loads(text).get("summary", ""))
        text = _cap(text)
        if not text:
            raise BackendError("empty summary")
        return text, False
    except (AMKGError, ValueError, AttributeError) as exc:
        log.warning("summary fallback: %s", exc)
        return _cap("; ".join(fallback_names)), True


def _entity_line(e):
    desc = e.description.split(" | ")[0] if e.description else ""
    label = e.name if not e.symbol else f"{e.name} ({e.symbol})"
    if e.latex:
        label += f": {e.latex}"
    return f"{e.kind.value} {label}" + (f": {desc}" if desc else "")


# -- build ---------------------------------------------------------------------

def _finish_clusters(drafts, layer, member_vectors, line_of, name_of, backend, text_backend, jobs):
    """Centroid, summary and summary embedding for each draft cluster."""
    prepared = []
    for i, (kind, members, eq) in enumerate(drafts):
        vecs = {m: member_vectors[m] for m in members}
        centroid = np.mean(np.vstack([vecs[m] for m in members]), axis=0)
        reps = _representatives(vecs, centroid, 12)
        lines = [line_of(m) for m in reps]
        fallback = [name_of(m) for m in reps[:3]]
        prepared.append((f"L{layer}C{i:04d}", kind, members, eq, centroid, lines, fallback))

    def run(p):
        return summarize(backend, p[5], p[6])

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(run, prepared))
    else:
        summaries = [run(p) for p in prepared]
    out = []
    for (cid, kind, members, eq, centroid, _, _), (text, flagged) in zip(prepared, summaries):
        emb = embed_text(text, text_backend, formula_dim=len(centroid) - text_backend.dim).fused
        out.append(Cluster(cid, layer, sorted(members), kind, centroid, text, emb, flagged, eq))
    return out


def build_hierarchy(kg, embeddings, backend, text_backend, params: HierarchyParams | None = None,
                    jobs=1) -> Hierarchy:
    p = params or HierarchyParams()
    uris = sorted(kg.entities)
    vectors = {u: require(embeddings, u) for u in uris}
    graph = build_hybrid_graph(kg, embeddings, p.alpha, p.k, p.theta_sim)

    pre = equation_centric_preclusters(kg, p.min_equation_cluster)
    covered = {m for _, members in pre for m in members}
    remaining = [u for u in uris if u not in covered]
    drafts = [("equation_centric", members, eq) for eq, members in pre]
    histories = []
    if remaining:
        sub = graph.subgraph(remaining)
        res = louvain(sub.nodes, sub.edges, seed=p.seed, resolution=p.resolution)
        histories.append(res.history)
        drafts += [("community", comm, None) for comm in res.communities()]

    def entity_name(u):
        e = kg.entities[u]
        return e.name

    layer = _finish_clusters(drafts, 1, vectors, lambda u: _entity_line(kg.entities[u]),
                             entity_name, backend, text_backend, jobs)
    layers = [layer]
    entity_counts = relation_counts(kg)

    while len(layers[-1]) >= p.theta_stop and len(layers) < p.max_layers:
        prev = layers[-1]
        owner = {}
        for c in prev:
            for u in _leaf_members(c, layers):
                owner[u] = c.id
        counts = Counter()
        for (a, b), n in entity_counts.items():
            ca, cb = owner.get(a), owner.get(b)
            if ca and cb and ca != cb:
                counts[_pair(ca, cb)] += n
        cvecs = {c.id: c.embedding for c in prev}
        cgraph = _hybrid([c.id for c in prev], cvecs, counts, p.alpha, p.k, p.theta_sim)
        res = louvain(cgraph.nodes, cgraph.edges, seed=p.seed, resolution=p.resolution)
        histories.append(res.history)
        if res.n_communities >= len(prev):
            log.info("layer %d: no further merging, stopping", len(layers) + 1)
            break
        by_id = {c.id: c for c in prev}
        drafts = [("community", comm, None) for comm in res.communities()]
        nxt = _finish_clusters(drafts, len(layers) + 1, cvecs, lambda cid: f"Cluster {cid}: {by_id[cid].summary}",
                               lambda cid: by_id[cid].summary, backend, text_backend, jobs)
        layers.append(nxt)

    return Hierarchy(entities=uris, layers=layers, params=p, louvain_history=histories)


def _leaf_members(cluster, layers):
    if cluster.layer == 1:
        return cluster.members
    below = {c.id: c for c in layers[cluster.layer - 2]}
    out = []
    for m in cluster.members:
        out.extend(_leaf_members(below[m], layers))
    return out


# -- inter-cluster relations ------------------------------------------------------

def _label_key(label):
    if label in _LABEL_PRECEDENCE:
        return (0, _LABEL_PRECEDENCE.index(label), "")
    return (1, 0, label)


def aggregate_inter_cluster_relations(kg, partition: dict) -> dict:
    """Cross-cluster relation counts with their modal relation kind.

    ``partition`` maps entity uri -> cluster id. Returns
    ``{(cluster_a, cluster_b): {"weight": count, "label": relation kind}}``.
    """
    by_pair = defaultdict(Counter)
    for rel in kg.relations.values():
        ca, cb = partition.get(rel.subject), partition.get(rel.object)
        if ca is None or cb is None or ca == cb:
            continue
        by_pair[_pair(ca, cb)][rel.predicate.value] += 1
    out = {}
    for pair in sorted(by_pair):
        counts = by_pair[pair]
        label = min(counts, key=lambda lab: (-counts[lab], _label_key(lab)))
        out[pair] = {"weight": sum(counts.values()), "label": label}
    return out


# -- lowest common ancestor ------------------------------------------------------

def lca(h: Hierarchy, uris):
    """Deepest (lowest-layer) cluster containing every uri, as ``(id, layer)``.

    Returns ``(ROOT, depth + 1)`` when no cluster contains them all.
    """
    uris = list(uris)
    if not uris:
        return ROOT, h.depth + 1
    chains = []
    for u in uris:
        if u not in h.entities:
            raise NotFoundError(f"{u!r} is not a layer-0 entity")
        chains.append(h.ancestors(u))
    for level in range(h.depth):
        ids = {chain[level] if level < len(chain) else None for chain in chains}
        if len(ids) == 1 and None not in ids:
            cid = ids.pop()
            return cid, h.clusters[cid].layer
    return ROOT, h.depth + 1


def partition_at(h: Hierarchy, layer: int) -> dict:
    """Map each entity uri to its cluster id at ``layer`` (>= 1)."""
    out = {}
    for c in h.layers[layer - 1]:
        for u in h.descendants(c.id):
            out[u] = c.id
    return out


__all__ = [
    "HierarchyParams", "HybridGraph", "Cluster", "Hierarchy", "ROOT",
    "build_hybrid_graph", "equation_centric_preclusters", "build_hierarchy",
    "aggregate_inter_cluster_relations", "lca", "partition_at", "relation_counts", "FORMULA_DIM",
]
