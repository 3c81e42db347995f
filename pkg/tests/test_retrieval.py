import pytest

from amkg.backends import HeuristicBackend
from amkg.embedding import default_backends, embed_graph
from amkg.errors import QueryError, RetrievalError
from amkg.fixtures import hierarchy_fixture
from amkg.hierarchy import build_hierarchy
from amkg.kg_store import KnowledgeGraph
from amkg.ontology import EntityKind as K
from amkg.retrieval import (
    INPUT_RELATED,
    SUPPORTING,
    TARGET,
    Query,
    Subgraph,
    assign_equation_roles,
    build_query,
    resolve_variable,
    retrieve,
)

from conftest import add, rel

EQ = "amkg://Equation/equation_cure_depth"


def _retrieve(kg, query, hierarchy=True, **kw):
    fb, tb = default_backends(0)
    emb = embed_graph(kg, fb, tb)
    h = build_hierarchy(kg, emb, HeuristicBackend(), tb) if hierarchy else None
    return retrieve(kg, h, emb, query, tb, **kw)


class TestQuery:
    def test_template_with_target(self):
        assert build_query(["E"], "C_d") == "equations and mechanisms E, C_d in additive manufacturing"

    def test_template_without_target(self):
        assert build_query(["P", "v"]) == "equations and mechanisms P, v in additive manufacturing"

    def test_natural_text_verbatim(self):
        assert Query(["E"], natural_text="how deep does resin cure").text == "how deep does resin cure"

    def test_empty_inputs(self):
        with pytest.raises(QueryError):
            Query([])
        with pytest.raises(QueryError):
            build_query([])


class TestRoles:
    def _chain(self):
        """Target equation, an equation feeding D_p, and an unrelated one."""
        kg = KnowledgeGraph()
        cd = add(kg, "C_d", K.VARIABLE, symbol="C_d")
        e = add(kg, "E", K.VARIABLE, symbol="E")
        dp = add(kg, "D_p", K.VARIABLE, symbol="D_p")
        eps = add(kg, "epsilon", K.VARIABLE, symbol="epsilon")
        t = add(kg, "t_e", K.VARIABLE, symbol="t_e")
        i = add(kg, "I", K.VARIABLE, symbol="I")
        q = add(kg, "q", K.VARIABLE, symbol="q")
        r = add(kg, "r", K.VARIABLE, symbol="r")
        jac = add(kg, "equation_cure_depth", K.EQUATION, latex=r"C_d = D_p \ln(E)")
        pen = add(kg, "equation_penetration_depth", K.EQUATION, latex=r"D_p = 1 / epsilon")
        dose = add(kg, "equation_dose", K.EQUATION, latex="E = I t_e")
        other = add(kg, "equation_other", K.EQUATION, latex="q = 2 r")
        for eq, outs, ins in ((jac, cd, (dp, e)), (pen, dp, (eps,)), (dose, e, (i, t)), (other, q, (r,))):
            rel(kg, eq, "has_output", outs)
            for u in ins:
                rel(kg, eq, "has_input", u)
        return kg, dict(jac=jac, pen=pen, dose=dose, other=other, cd=cd, e=e, i=i)

    def test_target(self):
        kg, u = self._chain()
        roles = assign_equation_roles(kg.entities.values(), kg.relations.values(), [u["e"]], u["cd"])
        assert roles[u["jac"]] == TARGET

    def test_input_related(self):
        kg, u = self._chain()
        roles = assign_equation_roles(kg.entities.values(), kg.relations.values(), [u["i"]])
        assert roles[u["dose"]] == INPUT_RELATED

    def test_supporting_via_shared_variable(self):
        kg, u = self._chain()
        roles = assign_equation_roles(kg.entities.values(), kg.relations.values(), [u["i"]], u["cd"])
        assert roles[u["pen"]] == SUPPORTING
        assert u["other"] not in roles

    def test_no_equations(self):
        kg = KnowledgeGraph()
        add(kg, "laser_power", K.PROCESS_PARAMETER)
        assert assign_equation_roles(kg.entities.values(), [], []) == {}


class TestRetrieve:
    def test_working_curve_subgraph(self, jacobs_kg):
        sg = _retrieve(jacobs_kg, Query(["E"], "C_d"))
        assert EQ in sg.uris()
        keys = {r.key for r in sg.relations}
        assert (EQ, "has_input", "amkg://Variable/e") in keys
        assert (EQ, "has_output", "amkg://Variable/c_d") in keys
        assert sg.roles[EQ] == TARGET
        assert {"C_d", "E", "D_p", "E_c"} <= sg.symbols()

    def test_forced_inclusion(self):
        kg = hierarchy_fixture()
        sg = _retrieve(kg, Query(["Delta_T"], "sigma_r"), k=1)
        assert resolve_variable(kg, "Delta_T") in sg.uris()
        assert resolve_variable(kg, "sigma_r") in sg.uris()

    def test_no_equations_gives_empty_roles(self):
        kg = KnowledgeGraph()
        rel(kg, add(kg, "laser_power", K.PROCESS_PARAMETER), "influences", add(kg, "porosity", K.PERFORMANCE), 1)
        sg = _retrieve(kg, Query(["laser_power"], "porosity"), hierarchy=False)
        assert sg.roles == {}
        assert len(sg.entities) == 2

    def test_empty_graph(self):
        with pytest.raises(RetrievalError):
            retrieve(KnowledgeGraph(), None, {}, Query(["E"]), default_backends(0)[1])

    def test_cap(self):
        kg = hierarchy_fixture()
        sg = _retrieve(kg, Query(["E"], "C_d"), max_entities=5)
        assert len(sg.entities) == 5 and sg.metadata["truncated"]
        assert resolve_variable(kg, "C_d") in sg.uris()

    def test_unresolved_warns(self, jacobs_kg):
        sg = _retrieve(jacobs_kg, Query(["zeta"], "C_d"))
        assert any("zeta" in w for w in sg.metadata["warnings"])

    def test_round_trip_and_determinism(self):
        kg = hierarchy_fixture()
        a = _retrieve(kg, Query(["E"], "C_d"))
        b = _retrieve(kg, Query(["E"], "C_d"))
        assert a.dumps() == b.dumps()
        assert Subgraph.from_dict(a.to_dict()).dumps() == a.dumps()
        assert a.summaries
