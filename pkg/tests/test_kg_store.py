import pytest
from hypothesis import given, settings, strategies as st

from amkg.errors import EndpointError, NotFoundError, ValidationError
from amkg.kg_store import (
    Entity,
    KnowledgeGraph,
    Relation,
    latex_completeness_key,
    load,
    neighbors,
    post_process,
    save,
    upsert_entity,
    upsert_relation,
)
from amkg.ontology import EntityKind as K
from amkg.ontology import validate_graph

from conftest import add, rel

EQ = "amkg://Equation/equation_cure_depth"


class TestUpsertEntity:
    def test_merge_descriptions_and_provenance(self):
        kg = KnowledgeGraph()
        upsert_entity(kg, Entity("cure_depth", K.PERFORMANCE, "depth of cured layer", provenance=["c1"]))
        upsert_entity(kg, Entity("Cure Depth", K.PERFORMANCE, "measured thickness", provenance=["c2"]))
        assert len(kg) == 1
        e = kg.get("amkg://Performance/cure_depth")
        assert e.provenance == ["c1", "c2"]
        assert e.description == "depth of cured layer | measured thickness"

    def test_more_complete_latex_wins(self):
        kg = KnowledgeGraph()
        upsert_entity(kg, Entity("equation_cure_depth", K.EQUATION, latex="C_d = D_p + 1"))
        upsert_entity(kg, Entity("equation_cure_depth", K.EQUATION, latex=r"C_d = D_p \ln(E/E_c)"))
        upsert_entity(kg, Entity("equation_cure_depth", K.EQUATION, latex="C_d = 2 D_p"))
        assert kg.get(EQ).latex == r"C_d = D_p \ln(E/E_c)"

    def test_completeness_ordering(self):
        assert latex_completeness_key(r"C_d = D_p \ln(E/E_c)") > latex_completeness_key("C_d = D_p")

    def test_fresh_entity_grows_graph(self, jacobs_kg):
        n = len(jacobs_kg)
        add(jacobs_kg, "scan_speed", K.PROCESS_PARAMETER)
        assert len(jacobs_kg) == n + 1

    def test_invalid_equation_latex(self):
        with pytest.raises(ValidationError):
            upsert_entity(KnowledgeGraph(), Entity("equation_bad", K.EQUATION, latex="D_p"))

    def test_same_name_different_kind_kept_apart(self):
        kg = KnowledgeGraph()
        add(kg, "cure_depth", K.PERFORMANCE)
        add(kg, "cure_depth", K.PHENOMENON)
        assert len(kg) == 2


class TestUpsertRelation:
    def test_weight_counts_observations(self, jacobs_kg):
        key = (EQ, "has_output", "amkg://Variable/c_d")
        assert jacobs_kg.relations[key].weight == 1
        rel(jacobs_kg, EQ, "has_output", "amkg://Variable/c_d")
        rel(jacobs_kg, EQ, "has_output", "amkg://Variable/c_d")
        assert jacobs_kg.relations[key].weight == 3

    def test_missing_endpoint(self, jacobs_kg):
        with pytest.raises(EndpointError):
            rel(jacobs_kg, EQ, "has_input", "amkg://Variable/ghost")

    def test_sign_conflict_keeps_first_and_notes(self):
        kg = KnowledgeGraph()
        lp = add(kg, "laser_power", K.PROCESS_PARAMETER)
        por = add(kg, "porosity", K.PERFORMANCE)
        upsert_relation(kg, Relation(lp, "influences", por, sign=1, provenance=["chunk_a"]))
        upsert_relation(kg, Relation(lp, "influences", por, sign=-1, provenance=["chunk_b"]))
        r = kg.relations[(lp, "influences", por)]
        assert r.sign == 1 and r.weight == 2
        report = validate_graph(kg)
        assert report.is_valid
        assert any("sign conflict" in n for n in report.notes)

    def test_weight_must_be_positive(self):
        with pytest.raises(ValidationError):
            Relation("a", "influences", "b", weight=0)


class TestPostProcess:
    def test_drops_outputless_equation_and_relations(self, jacobs_kg):
        orphan = add(jacobs_kg, "equation_orphan", K.EQUATION, latex="y = 2 x")
        rel(jacobs_kg, orphan, "has_input", add(jacobs_kg, "x", K.VARIABLE))
        clean, report = post_process(jacobs_kg)
        assert report.rules() == ["R1"]
        assert orphan not in clean.entities
        assert all(orphan not in k for k in clean.relations)
        assert validate_graph(clean).is_valid

    def test_clean_graph_is_fixed_point(self, jacobs_kg):
        clean, report = post_process(jacobs_kg)
        assert clean == jacobs_kg
        assert report.is_valid

    def test_dangling_relation_removed(self, jacobs_kg):
        r = Relation(EQ, "has_input", "amkg://Variable/ghost")
        jacobs_kg.relations[r.key] = r
        clean, report = post_process(jacobs_kg)
        assert report.rules() == ["R5"]
        assert r.key not in clean.relations

    def test_input_not_mutated(self, jacobs_kg):
        before = jacobs_kg.copy()
        r = Relation(EQ, "has_input", "amkg://Variable/ghost")
        jacobs_kg.relations[r.key] = r
        post_process(jacobs_kg)
        assert r.key in jacobs_kg.relations
        assert len(jacobs_kg.entities) == len(before.entities)


class TestNeighbors:
    def test_filtered(self, jacobs_kg):
        out = neighbors(jacobs_kg, EQ, {"has_input", "has_output"})
        assert len(out) == 4
        assert {e.name for _, e in out} == {"c_d", "e", "d_p", "e_c"}

    def test_isolated_and_empty_filter(self, jacobs_kg):
        iso = add(jacobs_kg, "lonely", K.MATERIAL)
        assert neighbors(jacobs_kg, iso) == []
        assert neighbors(jacobs_kg, EQ, "influences") == []

    def test_unknown(self, jacobs_kg):
        with pytest.raises(NotFoundError):
            neighbors(jacobs_kg, "amkg://Variable/ghost")


class TestPersistence:
    def test_round_trip(self, jacobs_kg, tmp_path):
        save(jacobs_kg, tmp_path)
        assert load(tmp_path) == jacobs_kg

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from("abcdef"), st.sampled_from("uvwxyz"), st.sampled_from([1, -1, 0])),
                    max_size=15))
    def test_round_trip_random(self, edges):
        import tempfile
        kg = KnowledgeGraph()
        for s, o, sign in edges:
            rel(kg, add(kg, s, K.PROCESS_PARAMETER), "influences", add(kg, o, K.PERFORMANCE), sign=sign)
        with tempfile.TemporaryDirectory() as d:
            save(kg, d)
            assert load(d) == kg
