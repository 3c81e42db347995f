import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from amkg.backends import HeuristicBackend, ScriptedBackend
from amkg.data import corpus_dir
from amkg.errors import BackendError, ChunkOverflowError, ExtractionError, MetricsError
from amkg.extraction.chunking import Chunk, RegexTokenizer, chunk_document, chunk_id, find_equations
from amkg.extraction.extract import extract_entities, extract_relations, parse_sign
from amkg.extraction.hints import HintSet, generate_hints, regime_name
from amkg.extraction.metrics import name_similarity, partial_f1
from amkg.extraction.pipeline import build_graph, read_documents
from amkg.fixtures import F1_PREDICTED, F1_REFERENCE, graph_from_triples
from amkg.kg_store import Entity
from amkg.ontology import EntityKind as K
from amkg.ontology import validate_graph

WORKING_CURVE = (
    "Under steady state exposure, the cure depth C_d of the resin follows the working curve\n\n"
    "$$C_d = D_p \\ln(E / E_c)$$\n\n"
    "where E is the exposure energy, D_p is the penetration depth and E_c is the critical energy of the resin."
)


def _chunk(text):
    return Chunk(chunk_id(text), text, find_equations(text), RegexTokenizer().count(text))


def _words(n, seed=0):
    rng = random.Random(seed)
    vocab = ["layer", "powder", "laser", "melt", "track", "resin", "cure", "surface", "build", "part"]
    sentences = []
    count = 0
    while count < n:
        s = " ".join(rng.choice(vocab) for _ in range(11)) + "."
        sentences.append(s.capitalize())
        count += 12
    return " ".join(sentences)


class TestChunking:
    def test_equation_with_context_is_one_chunk(self):
        chunks = chunk_document("A short lead paragraph.\n\n$$y = 2 x$$\n\nA short closing paragraph.")
        assert len(chunks) == 1
        c = chunks[0]
        assert "lead" in c.text and "closing" in c.text and c.equations == ["y = 2 x"]

    def test_long_text_split_under_budget(self):
        doc = _words(3000)
        tok = RegexTokenizer()
        assert tok.count(doc) >= 3000
        chunks = chunk_document(doc, tok)
        assert len(chunks) >= 3
        assert all(c.token_count <= 1024 for c in chunks)

    def test_equation_never_split(self):
        doc = _words(1000, seed=1) + "\n\n$$C_d = D_p \\ln(E / E_c)$$\n\n" + _words(1000, seed=2)
        chunks = chunk_document(doc)
        for c in chunks:
            assert c.text.count("$$") % 2 == 0
            assert c.token_count <= 1024
        assert sum("$$C_d = D_p \\ln(E / E_c)$$" in c.text for c in chunks) == 1

    def test_oversized_equation(self):
        huge = "$$y = " + " + ".join(f"x_{i}" for i in range(800)) + "$$"
        with pytest.raises(ChunkOverflowError):
            chunk_document(huge)

    def test_empty_document(self):
        with pytest.raises(ValueError):
            chunk_document("   ")

    def test_ids_are_content_hashes(self):
        a = chunk_document(WORKING_CURVE)
        b = chunk_document(WORKING_CURVE)
        assert [c.id for c in a] == [c.id for c in b]

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.sampled_from(["text", "eq"]), min_size=1, max_size=12), st.integers(40, 200))
    def test_budget_and_coverage(self, kinds, budget):
        parts = []
        for i, kind in enumerate(kinds):
            parts.append(f"$$y_{{{i}}} = a x + b$$" if kind == "eq" else _words(60, seed=i))
        doc = "\n\n".join(parts)
        chunks = chunk_document(doc, max_tokens=budget)
        assert all(c.token_count <= budget for c in chunks)
        joined = "\n\n".join(c.text for c in chunks)
        for i, kind in enumerate(kinds):
            if kind == "eq":
                assert joined.count(f"$$y_{{{i}}} = a x + b$$") == 1


class TestHints:
    def test_roles_from_equation(self):
        hints = generate_hints(_chunk(WORKING_CURVE))
        roles = {v["symbol"]: v["role"] for v in hints.equations[0]["variables"]}
        assert roles["C_d"] == "output"
        assert {roles["D_p"], roles["E"], roles["E_c"]} <= {"input", "constant"}

    def test_equation_free_chunk(self):
        assert generate_hints(_chunk("Porosity falls as the scan speed is reduced.")).equations == []

    def test_regime_phrase(self):
        hints = generate_hints(_chunk("Parts were built with a laser power of 100–300 W on a steel plate."))
        assert "laser_power_100_300_W" in hints.regimes

    def test_regime_name_format(self):
        assert regime_name("exposure energy", "15", "250", "mJ/cm^2") == "exposure_energy_15_250_mJ_per_cm_2"

    def test_lexicon_hits(self):
        hints = generate_hints(_chunk(WORKING_CURVE))
        assert "exposure_energy" in hints.process_parameters
        assert "cure_depth" in hints.performance_metrics
        assert [a["name"] for a in hints.assumptions] == ["steady_state"]

    def test_cap_trims(self):
        text = " ".join(f"Parts used a laser power of {i}–{i + 50} W." for i in range(100, 400))
        hints = generate_hints(_chunk(text), cap=40)
        assert 0 < len(hints.regimes) < 300
        assert RegexTokenizer().count(json.dumps(hints.regimes)) <= 40


APPENDIX_RECORDS = [
    {"name": "exposure_energy", "type": "ProcessParameter", "description": "Light energy per area"},
    {"name": "cure_depth", "type": "Performance", "description": "Thickness of cured resin"},
    {"name": "equation_cure_depth", "type": "Equation", "latex": "C_d = D_p \\ln(E/E_c)",
     "variables": [{"symbol": "C_d", "role": "output"}, {"symbol": "E", "role": "input"}]},
    {"name": "steady_state", "type": "Assumption", "description": "Exposure is steady"},
]


class TestExtractEntities:
    def test_scripted_appendix_records(self):
        chunk = _chunk(WORKING_CURVE)
        backend = ScriptedBackend([json.dumps(APPENDIX_RECORDS)])
        got = {(e.name, e.kind) for e in extract_entities(chunk, HintSet(), backend)}
        assert {("exposure_energy", K.PROCESS_PARAMETER), ("cure_depth", K.PERFORMANCE),
                ("equation_cure_depth", K.EQUATION), ("steady_state", K.ASSUMPTION)} <= got

    def test_heuristic_backend_finds_same_core(self):
        chunk = _chunk(WORKING_CURVE)
        got = {(e.name, e.kind) for e in extract_entities(chunk, generate_hints(chunk), HeuristicBackend())}
        assert {("exposure_energy", K.PROCESS_PARAMETER), ("cure_depth", K.PERFORMANCE),
                ("equation_cure_depth", K.EQUATION), ("steady_state", K.ASSUMPTION)} <= got

    def test_empty_chunk(self):
        assert extract_entities(_chunk(" "), HintSet(), ScriptedBackend([])) == []

    def test_malformed_record_dropped_with_warning(self):
        records = [APPENDIX_RECORDS[0], {"name": "mystery"}, APPENDIX_RECORDS[1]]
        warnings = []
        got = extract_entities(_chunk(WORKING_CURVE), HintSet(), ScriptedBackend([json.dumps(records)]), warnings)
        assert len(got) == 2 and len(warnings) == 1

    def test_retry_then_success(self):
        backend = ScriptedBackend(["not json at all", json.dumps(APPENDIX_RECORDS[:1])])
        assert len(extract_entities(_chunk(WORKING_CURVE), HintSet(), backend)) == 1
        assert len(backend.calls) == 2

    def test_unparseable_after_retry(self):
        with pytest.raises(ExtractionError) as info:
            extract_entities(_chunk(WORKING_CURVE), HintSet(), ScriptedBackend(["{oops", "{oops"]))
        assert info.value.raw == "{oops"

    def test_backend_failure_propagates(self):
        with pytest.raises(BackendError):
            extract_entities(_chunk(WORKING_CURVE), HintSet(), ScriptedBackend([BackendError("down")]))


class TestExtractRelations:
    entities = [
        Entity("equation_cure_depth", K.EQUATION, latex="C_d = D_p \\ln(E/E_c)"),
        Entity("exposure_energy", K.PROCESS_PARAMETER),
        Entity("cure_depth", K.PERFORMANCE),
    ]

    def test_scripted_triples(self):
        reply = json.dumps([
            {"subject": "equation_cure_depth", "predicate": "has_input", "object": "exposure_energy"},
            {"subject": "equation_cure_depth", "predicate": "has_output", "object": "cure_depth"},
            {"subject": "equation_cure_depth", "predicate": "has_input", "object": "ghost"},
            {"subject": "exposure_energy", "predicate": "influences", "object": "cure_depth"},
        ])
        warnings = []
        rels = extract_relations(_chunk(WORKING_CURVE), self.entities, ScriptedBackend([reply]), warnings)
        got = {(r.subject.split("/")[-1], r.predicate.value, r.object.split("/")[-1]) for r in rels}
        assert got == {("equation_cure_depth", "has_input", "exposure_energy"),
                       ("equation_cure_depth", "has_output", "cure_depth")}
        assert len(warnings) == 2

    def test_sign_kept_on_influences_only(self):
        reply = json.dumps([
            {"subject": "exposure_energy", "predicate": "influences", "object": "cure_depth", "sign": "+"},
            {"subject": "equation_cure_depth", "predicate": "has_output", "object": "cure_depth", "sign": 1},
        ])
        rels = extract_relations(_chunk(WORKING_CURVE), self.entities, ScriptedBackend([reply]))
        signs = {r.predicate.value: r.sign for r in rels}
        assert signs == {"influences": 1, "has_output": None}

    @pytest.mark.parametrize("raw, sign", [(1, 1), (-1, -1), (0, 0), ("decreases", -1), ("-1", -1),
                                           (None, None), (2, None), (True, None), ("maybe", None)])
    def test_parse_sign(self, raw, sign):
        assert parse_sign(raw) == sign


class TestPartialF1:
    def test_identity(self):
        m = partial_f1(F1_REFERENCE, F1_REFERENCE)
        assert (m.precision, m.recall, m.partial_f1) == (1.0, 1.0, 1.0)

    def test_token_overlap_counts(self):
        ref = [("uv_exposure_time", "influences", "cure_depth")]
        pred = [("exposure_time", "influences", "cure_depth")]
        assert name_similarity("exposure_time", "uv_exposure_time") == pytest.approx(2 / 3)
        assert partial_f1(pred, ref).matched == 1

    def test_hand_counted(self):
        m = partial_f1(F1_PREDICTED, F1_REFERENCE)
        assert m.precision == pytest.approx(2 / 3, abs=1e-12)
        assert m.recall == pytest.approx(1 / 2, abs=1e-12)
        assert m.partial_f1 == pytest.approx(4 / 7, abs=1e-12)
        assert (m.matched, m.spurious, m.missed) == (2, 1, 2)

    def test_graph_inputs(self):
        m = partial_f1(graph_from_triples(F1_PREDICTED), graph_from_triples(F1_REFERENCE))
        assert m.partial_f1 == pytest.approx(4 / 7, abs=1e-12)

    def test_empty_reference(self):
        with pytest.raises(MetricsError):
            partial_f1(F1_PREDICTED, [])

    def test_matching_is_one_to_one(self):
        ref = [("laser_power", "influences", "porosity")]
        pred = [("laser_power", "influences", "porosity")] * 3
        m = partial_f1(pred, ref)
        assert m.matched == 1 and m.precision == pytest.approx(1 / 3)


class TestBuildGraph:
    def test_bundled_corpus_builds_clean_and_deterministic(self):
        docs = read_documents([corpus_dir()])
        a = build_graph(docs, HeuristicBackend())
        b = build_graph(docs, HeuristicBackend(), jobs=3)
        assert a.clean and validate_graph(a.graph).is_valid
        assert a.graph == b.graph
        names = {e.name for e in a.graph.by_kind(K.EQUATION)}
        assert "equation_cure_depth" in names
