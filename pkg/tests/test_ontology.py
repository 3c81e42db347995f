import pytest
from hypothesis import given, strategies as st

from amkg.errors import EntityNameError, ValidationError
from amkg.kg_store import KnowledgeGraph, Relation
from amkg.ontology import (
    EntityKind,
    RelationKind,
    normalize_entity_name,
    validate_equation_latex,
    validate_graph,
)
from amkg.ontology import EntityKind as K

from conftest import add, rel


class TestNormalizeName:
    @pytest.mark.parametrize("raw, expected", [
        ("UV Exposure Time", "uv_exposure_time"),
        ("laser_power", "laser_power"),
        ("  Scan  Speed ", "scan_speed"),
        ("θ_c", "theta_c"),
        ("ProcessParameter", "process_parameter"),
        ("E_c", "e_c"),
    ])
    def test_examples(self, raw, expected):
        assert normalize_entity_name(raw) == expected

    @pytest.mark.parametrize("raw", ["", "   ", "--", None])
    def test_empty_rejected(self, raw):
        with pytest.raises(EntityNameError):
            normalize_entity_name(raw)

    @given(st.text(alphabet=st.characters(codec="ascii", categories=["L", "N", "Zs", "P"]), min_size=1))
    def test_idempotent(self, raw):
        try:
            once = normalize_entity_name(raw)
        except EntityNameError:
            return
        assert normalize_entity_name(once) == once
        assert once == once.lower()
        assert not once.startswith("_") and not once.endswith("_")
        assert "__" not in once


class TestEquationLatex:
    @pytest.mark.parametrize("latex, ok", [
        (r"C_d = D_p \ln(E / E_c)", True),
        ("D_p", False),
        ("x = y", False),
        ("C_d = D_p", False),
        ("E = I t_e", True),
        (r"E_v = \frac{P}{v h}", True),
        ("y = 2 x + 1", True),
        ("", False),
        (None, False),
    ])
    def test_examples(self, latex, ok):
        assert validate_equation_latex(latex) is ok


class TestKinds:
    def test_parse_variants(self):
        assert EntityKind.parse("process_parameter") is K.PROCESS_PARAMETER
        assert EntityKind.parse("Process Parameter") is K.PROCESS_PARAMETER
        assert RelationKind.parse("HAS_INPUT") is RelationKind.HAS_INPUT

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            EntityKind.parse("gadget")
        with pytest.raises(ValidationError):
            RelationKind.parse("is_near")


class TestValidateGraph:
    def test_complete_equation_passes(self, jacobs_kg):
        assert validate_graph(jacobs_kg).is_valid

    def test_missing_output_is_r1(self):
        kg = KnowledgeGraph()
        eq = add(kg, "equation_q", K.EQUATION, latex="y = 2 x")
        rel(kg, eq, "has_input", add(kg, "x", K.VARIABLE))
        report = validate_graph(kg)
        assert report.rules() == ["R1"]
        assert report.violations[0].item == eq

    def test_unsigned_influence_is_r2(self):
        kg = KnowledgeGraph()
        rel(kg, add(kg, "laser_power", K.PROCESS_PARAMETER), "influences", add(kg, "porosity", K.PERFORMANCE))
        assert validate_graph(kg).rules() == ["R2"]

    def test_sign_on_other_predicate_is_r2(self, jacobs_kg):
        r = next(r for r in jacobs_kg.relations.values() if r.predicate is RelationKind.HAS_OUTPUT)
        r.sign = 1
        assert validate_graph(jacobs_kg).rules() == ["R2"]

    def test_two_cycle_is_one_r3(self):
        kg = KnowledgeGraph()
        eqs = []
        for name in ("a", "b"):
            eq = add(kg, f"equation_{name}", K.EQUATION, latex="y = 2 x")
            rel(kg, eq, "has_input", add(kg, "x", K.VARIABLE))
            rel(kg, eq, "has_output", add(kg, "y", K.VARIABLE))
            eqs.append(eq)
        rel(kg, eqs[0], "derived_from", eqs[1])
        rel(kg, eqs[1], "derived_from", eqs[0])
        assert validate_graph(kg).rules() == ["R3"]

    def test_three_cycle_is_one_r3(self):
        kg = KnowledgeGraph()
        eqs = []
        for name in "abc":
            eq = add(kg, f"equation_{name}", K.EQUATION, latex="y = 2 x")
            rel(kg, eq, "has_input", add(kg, "x", K.VARIABLE))
            rel(kg, eq, "has_output", add(kg, "y", K.VARIABLE))
            eqs.append(eq)
        for i in range(3):
            rel(kg, eqs[i], "derived_from", eqs[(i + 1) % 3])
        assert validate_graph(kg).rules() == ["R3"]

    def test_regime_endpoint_kinds_r4(self):
        kg = KnowledgeGraph()
        rel(kg, add(kg, "porosity", K.PERFORMANCE), "valid_in_regime", add(kg, "low_power", K.REGIME))
        assert validate_graph(kg).rules() == ["R4"]

    def test_dangling_endpoint_is_r5_not_exception(self, jacobs_kg):
        r = Relation("amkg://Equation/equation_cure_depth", "has_input", "amkg://Variable/ghost")
        jacobs_kg.relations[r.key] = r
        assert validate_graph(jacobs_kg).rules() == ["R5"]

    def test_negated_assumption_pair_r6(self, jacobs_kg):
        eq = "amkg://Equation/equation_cure_depth"
        rel(jacobs_kg, eq, "requires_assumption", add(jacobs_kg, "steady_state", K.ASSUMPTION))
        rel(jacobs_kg, eq, "requires_assumption", add(jacobs_kg, "not_steady_state", K.ASSUMPTION))
        assert validate_graph(jacobs_kg).rules() == ["R6"]

    def test_format_text(self, jacobs_kg):
        assert validate_graph(jacobs_kg).format_text().startswith("graph valid")
