"""Triple-level precision/recall/F1 with partial entity-name matching.

Two triples match when their predicates are identical and both endpoint
names match, either exactly (after normalization) or with token-set Jaccard
similarity >= 0.5 on underscore-split tokens. Matching is one-to-one,
greedy by descending similarity.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import MetricsError

JACCARD_THRESHOLD = 0.5


@dataclass
class ExtractionMetrics:
    precision: float
    recall: float
    partial_f1: float
    matched: int
    spurious: int
    missed: int

    def to_dict(self):
        return asdict(self)


def name_similarity(a: str, b: str) -> float:
    if a == b:
        return 1.0
    ta, tb = set(a.split("_")) - {""}, set(b.split("_")) - {""}
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def triples(kg):
    """(subject name, predicate, object name) for every relation, sorted."""
    out = []
    for rel in kg.iter_relations():
        s = kg.entities[rel.subject].name if rel.subject in kg.entities else rel.subject
        o = kg.entities[rel.object].name if rel.object in kg.entities else rel.object
        out.append((s, rel.predicate.value, o))
    return sorted(out)


def match_triples(pred, ref, threshold=JACCARD_THRESHOLD):
    """Greedy one-to-one matching; returns ``[(i_pred, j_ref, score)]``."""
    candidates = []
    for i, (ps, pp, po) in enumerate(pred):
        for j, (rs, rp, ro) in enumerate(ref):
            if pp != rp:
                continue
            ss, so = name_similarity(ps, rs), name_similarity(po, ro)
            if ss >= threshold and so >= threshold:
                candidates.append(((ss + so) / 2, i, j))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_p, used_r, out = set(), set(), []
    for score, i, j in candidates:
        if i in used_p or j in used_r:
            continue
        used_p.add(i)
        used_r.add(j)
        out.append((i, j, score))
    return out


def partial_f1(predicted, reference, threshold=JACCARD_THRESHOLD) -> ExtractionMetrics:
    """Score ``predicted`` against ``reference`` (graphs or triple lists)."""
    pred = predicted if isinstance(predicted, list) else triples(predicted)
    ref = reference if isinstance(reference, list) else triples(reference)
    if not ref:
        raise MetricsError("reference graph has no triples")
    matched = len(match_triples(pred, ref, threshold))
    p = matched / len(pred) if pred else 0.0
    r = matched / len(ref)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return ExtractionMetrics(p, r, f1, matched, len(pred) - matched, len(ref) - matched)
