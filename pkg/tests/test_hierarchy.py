import math

import numpy as np
import pytest

from amkg.backends import HeuristicBackend, ScriptedBackend
from amkg.embedding import default_backends, embed_graph
from amkg.errors import BackendError, MissingEmbeddingError, NotFoundError
from amkg.fixtures import THEMES, hierarchy_fixture
from amkg.hierarchy import (
    ROOT,
    Hierarchy,
    HierarchyParams,
    aggregate_inter_cluster_relations,
    build_hierarchy,
    build_hybrid_graph,
    equation_centric_preclusters,
    lca,
    partition_at,
)
from amkg.kg_store import KnowledgeGraph
from amkg.ontology import EntityKind as K

from conftest import add, rel


def _embed(kg, seed=0):
    fb, tb = default_backends(seed)
    return embed_graph(kg, fb, tb), tb


def _build(kg, params=None, backend=None):
    emb, tb = _embed(kg)
    return build_hierarchy(kg, emb, backend or HeuristicBackend(), tb, params)


@pytest.fixture(scope="module")
def fixture_hierarchy():
    kg = hierarchy_fixture()
    return kg, _build(kg)


class TestHybridGraph:
    def _kg(self):
        kg = KnowledgeGraph()
        a = add(kg, "a", K.PROCESS_PARAMETER)
        b = add(kg, "b", K.PERFORMANCE)
        c = add(kg, "c", K.PERFORMANCE)
        d = add(kg, "d", K.PERFORMANCE)
        emb = {
            a: np.array([1.0, 0.0, 0.0]),
            b: np.array([0.8, 0.6, 0.0]),
            c: np.array([0.65, 0.0, math.sqrt(1 - 0.65 ** 2)]),
            d: np.array([0.0, 0.0, -1.0]),
        }
        return kg, emb, (a, b, c, d)

    def test_relation_weight(self):
        kg, emb, (a, b, c, d) = self._kg()
        rel(kg, a, "influences", d, sign=1)
        rel(kg, a, "influences", d, sign=1)
        g = build_hybrid_graph(kg, emb, alpha=0.6)
        assert g.weight(a, d) == pytest.approx(1.2)
        assert g.kind(a, d) == "relation"

    def test_similarity_weight(self):
        kg, emb, (a, b, c, d) = self._kg()
        g = build_hybrid_graph(kg, emb, alpha=0.6)
        assert g.weight(a, b) == pytest.approx(0.4 * 0.8)
        assert g.kind(b, a) == "similarity"

    def test_below_threshold(self):
        kg, emb, (a, b, c, d) = self._kg()
        g = build_hybrid_graph(kg, emb)
        assert g.weight(a, c) == 0.0

    def test_knn_limit(self):
        kg, emb, (a, b, c, d) = self._kg()
        g = build_hybrid_graph(kg, emb, k=0)
        assert g.edges == {}

    def test_missing_embedding(self):
        kg, emb, (a, *_) = self._kg()
        del emb[a]
        with pytest.raises(MissingEmbeddingError):
            build_hybrid_graph(kg, emb)


class TestPreclusters:
    def test_equation_with_two_variables_and_assumption(self):
        kg = KnowledgeGraph()
        eq = add(kg, "equation_q", K.EQUATION, latex="y = 2 x")
        rel(kg, eq, "has_input", add(kg, "x", K.VARIABLE))
        rel(kg, eq, "has_output", add(kg, "y", K.VARIABLE))
        rel(kg, eq, "requires_assumption", add(kg, "steady_state", K.ASSUMPTION))
        rel(kg, eq, "valid_in_regime", add(kg, "window", K.REGIME))
        [(uri, members)] = equation_centric_preclusters(kg)
        assert uri == eq and len(members) == 4

    def test_too_small(self):
        kg = KnowledgeGraph()
        eq = add(kg, "equation_q", K.EQUATION, latex="y = 2 x")
        rel(kg, eq, "has_output", add(kg, "y", K.VARIABLE))
        assert equation_centric_preclusters(kg) == []

    def test_shared_variable_goes_to_stronger_link(self):
        kg = KnowledgeGraph()
        e1 = add(kg, "equation_one", K.EQUATION, latex="y = 2 x")
        e2 = add(kg, "equation_two", K.EQUATION, latex="z = 3 x")
        x = add(kg, "x", K.VARIABLE)
        for eq, out in ((e1, "y"), (e2, "z")):
            rel(kg, eq, "has_input", x)
            rel(kg, eq, "has_output", add(kg, out, K.VARIABLE))
        rel(kg, e2, "derived_from", e1)
        # e2 gets a second relation kind touching x
        rel(kg, e2, "has_output", x)
        got = dict(equation_centric_preclusters(kg, min_size=2))
        assert x in got[e2] and x not in got[e1]


class TestBuild:
    def test_fixture_layer_one(self, fixture_hierarchy):
        kg, h = fixture_hierarchy
        eq_clusters = [c for c in h.layers[0] if c.kind == "equation_centric"]
        assert len(eq_clusters) >= len(THEMES)
        for c in eq_clusters:
            assert c.equation in c.members
            for m in c.members:
                if m != c.equation:
                    assert kg.entities[m].kind in (K.VARIABLE, K.ASSUMPTION)
                    assert any(m in (r.subject, r.object) and c.equation in (r.subject, r.object)
                               for r in kg.relations.values())

    def test_layers_partition(self, fixture_hierarchy):
        kg, h = fixture_hierarchy
        for n in range(1, h.depth + 1):
            seen = [u for c in h.layers[n - 1] for u in h.descendants(c.id)]
            assert sorted(seen) == sorted(kg.entities)

    def test_stop_condition(self, fixture_hierarchy):
        _, h = fixture_hierarchy
        assert len(h.layers[-1]) < h.params.theta_stop or h.depth == h.params.max_layers

    def test_multi_layer_partitions(self):
        kg = hierarchy_fixture()
        h = _build(kg, HierarchyParams(theta_stop=5, theta_sim=0.2))
        assert h.depth >= 2
        for n in range(1, h.depth + 1):
            seen = [u for c in h.layers[n - 1] for u in h.descendants(c.id)]
            assert sorted(seen) == sorted(kg.entities)
        for n in range(2, h.depth + 1):
            below = {c.id for c in h.layers[n - 2]}
            assert sorted(m for c in h.layers[n - 1] for m in c.members) == sorted(below)

    def test_small_graph_single_layer(self):
        kg = KnowledgeGraph()
        eq = add(kg, "equation_q", K.EQUATION, latex="y = 2 x")
        rel(kg, eq, "has_input", add(kg, "x", K.VARIABLE))
        rel(kg, eq, "has_output", add(kg, "y", K.VARIABLE))
        h = _build(kg)
        assert h.depth == 1
        assert h.layer(0) == sorted(kg.entities)

    def test_history_non_decreasing(self, fixture_hierarchy):
        _, h = fixture_hierarchy
        for hist in h.louvain_history:
            assert all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))

    def test_byte_deterministic(self, fixture_hierarchy):
        kg, h = fixture_hierarchy
        assert _build(kg).dumps() == h.dumps()

    def test_parallel_summaries_match(self, fixture_hierarchy):
        kg, h = fixture_hierarchy
        emb, tb = _embed(kg)
        assert build_hierarchy(kg, emb, HeuristicBackend(), tb, jobs=4).dumps() == h.dumps()

    def test_summary_fallback(self):
        kg = hierarchy_fixture()
        h = _build(kg, backend=ScriptedBackend([]))
        assert all(c.summary_fallback for c in h.layers[0])
        assert all(c.summary for c in h.layers[0])

    def test_summaries_capped(self, fixture_hierarchy):
        _, h = fixture_hierarchy
        assert all(0 < len(c.summary) <= 200 for layer in h.layers for c in layer)

    def test_round_trip(self, fixture_hierarchy, tmp_path):
        _, h = fixture_hierarchy
        h.save(tmp_path)
        assert Hierarchy.load(tmp_path).dumps() == h.dumps()


class TestInterCluster:
    def _kg(self):
        kg = KnowledgeGraph()
        p = add(kg, "p", K.PROCESS_PARAMETER)
        q = add(kg, "q", K.PERFORMANCE)
        eq = add(kg, "equation_q", K.EQUATION, latex="y = 2 x")
        x = add(kg, "x", K.VARIABLE)
        return kg, p, q, eq, x

    def test_modal_label(self):
        kg, p, q, eq, x = self._kg()
        q2 = add(kg, "q2", K.PERFORMANCE)
        q3 = add(kg, "q3", K.PERFORMANCE)
        for target in (q, q2, q3):
            rel(kg, p, "influences", target, sign=1)
        rel(kg, eq, "has_input", x)
        part = {p: "A", eq: "A", q: "B", q2: "B", q3: "B", x: "B"}
        assert aggregate_inter_cluster_relations(kg, part) == {("A", "B"): {"weight": 4, "label": "influences"}}

    def test_no_cross_relations(self):
        kg, p, q, eq, x = self._kg()
        rel(kg, p, "influences", q, sign=1)
        assert aggregate_inter_cluster_relations(kg, {p: "A", q: "A"}) == {}

    def test_tie_precedence(self):
        kg, p, q, eq, x = self._kg()
        rel(kg, eq, "has_output", x)
        rel(kg, eq, "has_input", x)
        out = aggregate_inter_cluster_relations(kg, {eq: "A", x: "B"})
        assert out[("A", "B")]["label"] == "has_input"


class TestLca:
    def test_same_cluster(self, fixture_hierarchy):
        _, h = fixture_hierarchy
        c = h.layers[0][0]
        assert lca(h, c.members[:2]) == (c.id, 1)

    def test_shared_parent_and_root(self):
        kg = hierarchy_fixture()
        h = _build(kg, HierarchyParams(theta_stop=5, theta_sim=0.2))
        parent = next(c for c in h.layers[1] if len(c.members) >= 2)
        a = h.clusters[parent.members[0]].members[0]
        b = h.clusters[parent.members[1]].members[0]
        assert lca(h, [a, b]) == (parent.id, 2)
        top = h.layers[-1]
        if len(top) > 1:
            a, b = h.descendants(top[0].id)[0], h.descendants(top[1].id)[0]
            assert lca(h, [a, b]) == (ROOT, h.depth + 1)

    def test_unknown(self, fixture_hierarchy):
        _, h = fixture_hierarchy
        with pytest.raises(NotFoundError):
            lca(h, ["amkg://Variable/ghost"])

    def test_partition_at(self, fixture_hierarchy):
        kg, h = fixture_hierarchy
        part = partition_at(h, 1)
        assert sorted(part) == sorted(kg.entities)
