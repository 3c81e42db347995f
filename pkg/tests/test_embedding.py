import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amkg.embedding import (
    FORMULA_DIM,
    TEXT_DIM,
    EmbeddingBackend,
    HashingEmbedder,
    cosine_matrix,
    cosine_similarity,
    default_backends,
    embed_entity,
    embed_graph,
    latex_to_description,
    load_embeddings,
    require,
    save_embeddings,
)
from amkg.errors import BackendError, DimensionError, MissingEmbeddingError
from amkg.kg_store import Entity
from amkg.ontology import EntityKind as K


class TestLatexToDescription:
    def test_working_curve(self):
        assert latex_to_description(r"C_d = D_p \ln(E/E_c)") == \
            "C_d equals D_p times natural log of E divided by E_c"

    def test_identity(self):
        assert latex_to_description("y = x") == "y equals x"

    def test_exponential_form(self):
        words = latex_to_description(r"C_d = K_1 \exp\left(-\frac{K_2}{E}\right)")
        assert "exponential of" in words and "divided by" in words
        assert "left" not in words and "\\" not in words

    def test_power(self):
        assert "to the power of" in latex_to_description("y = x^2")

    @settings(max_examples=200, deadline=None)
    @given(st.text(alphabet=list("xyzE_c^{}()\\=+-*/ 0123456789lnexpfrac"), max_size=40))
    def test_never_raises(self, latex):
        out = latex_to_description(latex)
        assert isinstance(out, str) and "\\" not in out


class TestHybridVectors:
    backends = default_backends(0)

    def test_latex_free_norm(self):
        v = embed_entity(Entity("cure_depth", K.PERFORMANCE, "thickness"), *self.backends)
        assert np.all(v.formula_segment == 0)
        assert np.linalg.norm(v.fused) == pytest.approx(0.7, abs=1e-12)

    def test_equation_norm_and_dimension(self):
        e = Entity("equation_cure_depth", K.EQUATION, latex=r"C_d = D_p \ln(E/E_c)")
        v = embed_entity(e, *self.backends)
        assert v.fused.shape == (FORMULA_DIM + TEXT_DIM,) == (1920,)
        assert np.linalg.norm(v.fused) == pytest.approx(math.sqrt(0.58), abs=1e-12)

    def test_identical_entities_identical_vectors(self):
        a = Entity("equation_a", K.EQUATION, "same", latex="y = 2 x")
        b = Entity("equation_a", K.EQUATION, "same", latex="y = 2 x")
        assert np.array_equal(embed_entity(a, *self.backends).fused, embed_entity(b, *self.backends).fused)

    def test_parallel_matches_serial(self, jacobs_kg):
        a = embed_graph(jacobs_kg, *self.backends)
        b = embed_graph(jacobs_kg, *self.backends, jobs=4)
        assert all(np.array_equal(a[u], b[u]) for u in a)

    def test_dimension_mismatch(self):
        class Short(EmbeddingBackend):
            dim = TEXT_DIM

            def embed(self, text):
                return np.ones(3)

        with pytest.raises(DimensionError):
            embed_entity(Entity("x", K.VARIABLE), self.backends[0], Short())

    def test_backend_failure(self):
        class Broken(EmbeddingBackend):
            dim = TEXT_DIM

            def embed(self, text):
                raise RuntimeError("offline")

        with pytest.raises(BackendError):
            embed_entity(Entity("x", K.VARIABLE), self.backends[0], Broken())

    def test_hashing_shares_vocabulary(self):
        h = HashingEmbedder(256, seed=3)
        near = cosine_similarity(h.embed("laser power level"), h.embed("laser power"))
        far = cosine_similarity(h.embed("laser power level"), h.embed("resin viscosity"))
        assert near > far


class TestCosine:
    def test_identity_and_orthogonal(self):
        v = np.array([0.3, -1.0, 2.0])
        assert cosine_similarity(v, v) == pytest.approx(1.0)
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_hand_value(self):
        assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(1 / math.sqrt(2), abs=1e-9)

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            cosine_similarity([1, 0], [1, 0, 0])

    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.lists(st.floats(-10, 10), min_size=3, max_size=3))
    def test_bounded_symmetric(self, a, b):
        c = cosine_similarity(a, b)
        assert -1.0 <= c <= 1.0
        assert c == pytest.approx(cosine_similarity(b, a))

    def test_matrix_matches_pairwise(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((5, 7))
        full = cosine_matrix(m)
        for i in range(5):
            for j in range(5):
                assert full[i, j] == pytest.approx(cosine_similarity(m[i], m[j]), abs=1e-12)


class TestCache:
    def test_round_trip(self, jacobs_kg, tmp_path):
        emb = embed_graph(jacobs_kg, *default_backends(0))
        save_embeddings(emb, tmp_path)
        back = load_embeddings(tmp_path)
        assert sorted(back) == sorted(emb)
        assert all(np.array_equal(back[u], emb[u]) for u in emb)

    def test_missing(self):
        with pytest.raises(MissingEmbeddingError):
            require({}, "amkg://Variable/x")
