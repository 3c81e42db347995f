"""Small hand-built graphs used by the tests, the acceptance suite and the demos."""

from __future__ import annotations

from .kg_store import Entity, KnowledgeGraph, Relation, make_uri, upsert_entity, upsert_relation
from .ontology import EntityKind as K

# theme: (equation name, latex, output (symbol, description), inputs [(symbol, description)],
#         assumption, process parameters, performance measures, material, regime)
THEMES = [
    ("equation_cure_depth", r"C_d = D_p \ln(E / E_c)", ("C_d", "cure depth"),
     [("E", "exposure energy"), ("D_p", "penetration depth"), ("E_c", "critical energy")],
     "beer_lambert_attenuation", ["exposure_time", "light_intensity"], ["cure_depth", "overcure"],
     "acrylate_resin", "exposure_energy_15_250_mJ_per_cm_2"),
    ("equation_energy_density", r"E_v = \frac{P}{v h}", ("E_v", "volumetric energy density"),
     [("P", "laser power"), ("v", "scan speed"), ("h", "hatch spacing")],
     "steady_state", ["laser_power", "scan_speed"], ["porosity", "relative_density"],
     "ti_6al_4v", "energy_density_40_120_J_per_mm_3"),
    ("equation_melt_pool_depth", r"d_m = \frac{A P_l}{v_s}", ("d_m", "melt pool depth"),
     [("A", "absorptivity"), ("P_l", "beam power"), ("v_s", "travel speed")],
     "gaussian_beam", ["beam_diameter", "preheat_temperature"], ["melt_pool_depth", "melt_pool_width"],
     "stainless_steel_316l", "preheat_temperature_20_200_C"),
    ("equation_volumetric_shrinkage", r"S_v = S_0 X_c (1 - \phi)", ("S_v", "volumetric shrinkage"),
     [("S_0", "shrinkage at full conversion"), ("X_c", "degree of conversion"), ("phi", "filler fraction")],
     "isotropic_shrinkage", ["filler_loading", "postcure_time"], ["shrinkage", "warpage"],
     "ceramic_slurry", "filler_loading_0_50_pct"),
    ("equation_residual_stress", r"\sigma_r = E_m \alpha_t \Delta_T", ("sigma_r", "residual stress"),
     [("E_m", "elastic modulus"), ("alpha_t", "thermal expansion coefficient"), ("Delta_T", "temperature drop")],
     "linear_elasticity", ["cooling_rate", "build_plate_temperature"], ["residual_stress", "distortion"],
     "inconel_718", "cooling_rate_100_1000_K_per_s"),
]


def _add(kg, name, kind, description="", latex=None, symbol=None):
    upsert_entity(kg, Entity(name, kind, description, latex=latex, symbol=symbol))
    return make_uri(kind, Entity(name, kind).name)


def _rel(kg, s, p, o, sign=None):
    upsert_relation(kg, Relation(s, p, o, sign=sign))


def hierarchy_fixture() -> KnowledgeGraph:
    """60 entities around 5 equations; every equation has 3 inputs, 1 output, 1 assumption."""
    kg = KnowledgeGraph()
    for eq_name, latex, (out_sym, out_desc), inputs, assumption, pps, perfs, material, regime in THEMES:
        theme = eq_name.replace("equation_", "").replace("_", " ")
        eq = _add(kg, eq_name, K.EQUATION, f"Relation giving {out_desc}", latex=latex)
        out = _add(kg, out_sym, K.VARIABLE, out_desc, symbol=out_sym)
        _rel(kg, eq, "has_output", out)
        for sym, desc in inputs:
            _rel(kg, eq, "has_input", _add(kg, sym, K.VARIABLE, desc, symbol=sym))
        a = _add(kg, assumption, K.ASSUMPTION, f"{assumption.replace('_', ' ')} assumed for {theme}")
        _rel(kg, eq, "requires_assumption", a)
        m = _add(kg, material, K.MATERIAL, f"{material.replace('_', ' ')} studied for {theme}")
        _rel(kg, eq, "uses_material", m)
        r = _add(kg, regime, K.REGIME, f"operating window for {theme}")
        _rel(kg, eq, "valid_in_regime", r)
        pp_uris = [_add(kg, p, K.PROCESS_PARAMETER, f"{p.replace('_', ' ')} setting in {theme}") for p in pps]
        perf_uris = [_add(kg, p, K.PERFORMANCE, f"{p.replace('_', ' ')} outcome of {theme}") for p in perfs]
        _rel(kg, pp_uris[0], "valid_in_regime", r)
        for i, pp in enumerate(pp_uris):
            for j, perf in enumerate(perf_uris):
                _rel(kg, pp, "influences", perf, sign=1 if (i + j) % 2 == 0 else -1)
        _rel(kg, out, "corresponds_to", perf_uris[0])
    return kg


def violation_fixture() -> KnowledgeGraph:
    """Graph with exactly three rule violations: R1, R2 and R3.

    * ``equation_orphan_input`` has an input but no output (R1);
    * ``equation_a`` and ``equation_b`` are derived from each other (R3);
    * ``laser_power`` influences ``porosity`` with no sign (R2).
    """
    kg = KnowledgeGraph()
    x = _add(kg, "x", K.VARIABLE, "input", symbol="x")
    y = _add(kg, "y", K.VARIABLE, "output", symbol="y")
    z = _add(kg, "z", K.VARIABLE, "second output", symbol="z")
    orphan = _add(kg, "equation_orphan_input", K.EQUATION, latex="w = 2 x")
    a = _add(kg, "equation_a", K.EQUATION, latex="y = 3 x + 1")
    b = _add(kg, "equation_b", K.EQUATION, latex="z = y^2")
    lp = _add(kg, "laser_power", K.PROCESS_PARAMETER)
    por = _add(kg, "porosity", K.PERFORMANCE)
    _rel(kg, orphan, "has_input", x)
    _rel(kg, a, "has_input", x)
    _rel(kg, a, "has_output", y)
    _rel(kg, b, "has_input", y)
    _rel(kg, b, "has_output", z)
    _rel(kg, a, "derived_from", b)
    _rel(kg, b, "derived_from", a)
    _rel(kg, lp, "influences", por, sign=None)
    return kg


# predicted vs reference triples for the partial-match F1 check:
# one exact match, one match through token overlap (laser_power vs laser_power_level,
# Jaccard 2/3), one predicate mismatch; two reference triples are missed.
F1_REFERENCE = [
    ("laser_power", "influences", "melt_pool_depth"),
    ("scan_speed", "influences", "melt_pool_depth"),
    ("equation_energy_density", "has_input", "p"),
    ("equation_energy_density", "has_output", "e_v"),
]
F1_PREDICTED = [
    ("laser_power_level", "influences", "melt_pool_depth"),
    ("equation_energy_density", "has_output", "e_v"),
    ("scan_speed", "has_input", "melt_pool_depth"),
]


def graph_from_triples(triples) -> KnowledgeGraph:
    """Graph whose entities take their kind from the predicate's domain and range."""
    kinds = {
        "influences": (K.PROCESS_PARAMETER, K.PERFORMANCE),
        "has_input": (K.EQUATION, K.VARIABLE),
        "has_output": (K.EQUATION, K.VARIABLE),
        "requires_assumption": (K.EQUATION, K.ASSUMPTION),
        "valid_in_regime": (K.EQUATION, K.REGIME),
        "corresponds_to": (K.VARIABLE, K.PERFORMANCE),
        "uses_material": (K.EQUATION, K.MATERIAL),
        "derived_from": (K.EQUATION, K.EQUATION),
    }
    kg = KnowledgeGraph()
    for s, p, o in triples:
        ks, ko = kinds[p]
        latex = "y = 2 x"
        su = _add(kg, s, ks, latex=latex if ks is K.EQUATION else None, symbol=s if ks is K.VARIABLE else None)
        ou = _add(kg, o, ko, latex=latex if ko is K.EQUATION else None, symbol=o if ko is K.VARIABLE else None)
        _rel(kg, su, p, ou, sign=1 if p == "influences" else None)
    return kg
