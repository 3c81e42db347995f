import numpy as np
import pytest

from amkg.kg_store import Entity, KnowledgeGraph, Relation, make_uri, upsert_entity, upsert_relation
from amkg.ontology import EntityKind as K


def add(kg, name, kind, description="", latex=None, symbol=None):
    e = Entity(name, kind, description, latex=latex, symbol=symbol)
    upsert_entity(kg, e)
    return e.uri


def rel(kg, s, p, o, sign=None):
    upsert_relation(kg, Relation(s, p, o, sign=sign))


@pytest.fixture
def jacobs_kg():
    """Working-curve equation with its variables, assumption and regime."""
    kg = KnowledgeGraph()
    eq = add(kg, "equation_cure_depth", K.EQUATION, "cure depth working curve", latex=r"C_d = D_p \ln(E / E_c)")
    cd = add(kg, "C_d", K.VARIABLE, "cure depth", symbol="C_d")
    e = add(kg, "E", K.VARIABLE, "exposure energy", symbol="E")
    dp = add(kg, "D_p", K.VARIABLE, "penetration depth", symbol="D_p")
    ec = add(kg, "E_c", K.VARIABLE, "critical energy", symbol="E_c")
    a = add(kg, "beer_lambert_attenuation", K.ASSUMPTION, "light decays exponentially with depth")
    r = add(kg, "exposure_energy_15_250_mJ_per_cm_2", K.REGIME, "exposure window")
    rel(kg, eq, "has_output", cd)
    for u in (e, dp, ec):
        rel(kg, eq, "has_input", u)
    rel(kg, eq, "requires_assumption", a)
    rel(kg, eq, "valid_in_regime", r)
    return kg


def jacobs_data(seed=20240101, n=20, noise=0.002):
    rng = np.random.default_rng(seed)
    E = np.linspace(15, 250, n)
    return E, 0.2 * np.log(E / 10.0) + rng.normal(0, noise, n)


# acceptance results keyed by criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(str(k).rstrip("m")), str(k))):
        terminalreporter.write_line(ACCEPTANCE[key])
