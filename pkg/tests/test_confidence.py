import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from amkg.confidence import (
    ConfidenceWeights,
    InfluenceSpec,
    TrainingDomain,
    VariableRange,
    assumption_penalty,
    bootstrap_uncertainty,
    count_assumptions,
    distance_confidence,
    extrapolation_distance,
    fit_confidence,
    influence_spec_from_subgraph,
    normalized_distance,
    physics_confidence,
    score_prediction,
    sign_consistency,
    statistical_confidence,
    total_confidence,
)
from amkg.equations.compile import compile_expression
from amkg.equations.fitting import Dataset, fit
from amkg.equations.latex import free_symbols, parse_latex
from amkg.errors import BootstrapError, UncertaintyError
from amkg.ontology import EntityKind as K
from amkg.retrieval import Subgraph

from conftest import add, jacobs_data, rel


def _compile(latex, inputs):
    eq = parse_latex(latex)
    _, params = free_symbols(eq.rhs)
    return compile_expression(eq.rhs, inputs, params, target=eq.target)


def _linear(seed, n=30, sigma=0.1):
    rng = np.random.default_rng(seed)
    x = np.linspace(0, 10, n)
    return Dataset({"x": x, "y": 2 * x + rng.normal(0, sigma, n)})


class TestDistance:
    @pytest.mark.parametrize("x, d", [(300, 50), (100, 0), (30, 20), (50, 0), (250, 0)])
    def test_extrapolation_distance(self, x, d):
        assert extrapolation_distance(x, 50, 250) == d

    def test_normalized_single(self):
        dom = TrainingDomain({"E": VariableRange(50, 250)}, 1.0)
        assert normalized_distance({"E": 50}, dom) == pytest.approx(0.25)

    def test_normalized_two_vars(self):
        dom = TrainingDomain({"a": VariableRange(0, 4), "b": VariableRange(0, 8)}, 1.0)
        assert normalized_distance({"a": 1, "b": 2}, dom) == pytest.approx(0.25 * math.sqrt(2), abs=1e-12)

    def test_normalized_zero(self):
        dom = TrainingDomain({"a": VariableRange(0, 4)}, 1.0)
        assert normalized_distance({"a": 0}, dom) == 0.0

    def test_zero_width_noted(self):
        dom = TrainingDomain({"a": VariableRange(2, 2)}, 1.0)
        notes = []
        assert normalized_distance({"a": 1.5}, dom, notes) == 1.5
        assert notes

    def test_decay_values(self):
        assert distance_confidence(0.0) == 1.0
        assert distance_confidence(0.25, 2.0) == pytest.approx(math.exp(-0.5), abs=1e-12)
        assert distance_confidence(0.25) == pytest.approx(0.60653, abs=1e-5)
        with pytest.raises(ValueError):
            distance_confidence(0.1, 0.0)

    @given(st.floats(0, 50), st.floats(0, 50), st.floats(0.1, 10))
    def test_decay_monotone(self, a, b, alpha):
        lo, hi = sorted((a, b))
        assert distance_confidence(hi, alpha) <= distance_confidence(lo, alpha)
        assert 0.0 <= distance_confidence(hi, alpha) <= 1.0


class TestScores:
    @pytest.mark.parametrize("r2, s", [(0.99, 0.99), (-0.3, 0.0), (1.0, 1.0), (float("nan"), 0.0)])
    def test_fit_confidence(self, r2, s):
        assert fit_confidence(r2) == s

    @pytest.mark.parametrize("n, s", [(0, 1.0), (3, 0.85), (6, 0.7), (10, 0.7)])
    def test_assumption_penalty(self, n, s):
        assert assumption_penalty(n) == pytest.approx(s, abs=1e-12)

    def test_physics(self):
        assert physics_confidence(1, 1) == 1
        assert physics_confidence(0.85, 0.75) == pytest.approx(0.6375)
        assert physics_confidence(0.7, 0) == 0

    def test_total(self):
        assert total_confidence(1, 1, 1, 1) == pytest.approx(1.0, abs=1e-12)
        c = total_confidence(0.60653, 0.9, 0.85, 0.8)
        assert c == pytest.approx(0.4 * 0.60653 + 0.3 * 0.9 + 0.2 * 0.85 + 0.1 * 0.8, abs=1e-12)
        assert c == pytest.approx(0.76261, abs=1e-5)
        assert total_confidence(0, 0, 0, 0) == 0.0

    def test_statistical(self):
        assert statistical_confidence(0.9, 0.7) == pytest.approx(0.8)

    def test_effective_uncertainty_weight(self):
        assert ConfidenceWeights().effective_uncertainty_weight == pytest.approx(0.25)
        assert ConfidenceWeights().total == pytest.approx(1.0)

    @given(*[st.floats(0, 1)] * 4)
    def test_total_bounded(self, a, b, c, d):
        assert 0.0 <= total_confidence(a, b, c, d) <= 1.0


class TestSignConsistency:
    f = _compile("y = k_1 a + k_2 b + k_3 c + k_4 d", ["a", "b", "c", "d"])
    dom = TrainingDomain({s: VariableRange(0, 1) for s in "abcd"}, 1.0)
    theta = np.array([1.0, -1.0, 2.0, 0.5])

    def test_all_match(self):
        spec = InfluenceSpec([("a", 1), ("b", -1), ("c", 1), ("d", 1)])
        assert sign_consistency(self.f, self.theta, self.dom, spec) == 1.0

    def test_one_mismatch(self):
        spec = InfluenceSpec([("a", 1), ("b", -1), ("c", 1), ("d", -1)])
        assert sign_consistency(self.f, self.theta, self.dom, spec) == 0.75

    def test_empty(self):
        assert sign_consistency(self.f, self.theta, self.dom, InfluenceSpec()) == 1.0

    def test_zero_sign_and_unknown_input_skipped(self):
        notes = []
        spec = InfluenceSpec([("a", 0), ("z", 1), ("b", 1)])
        assert sign_consistency(self.f, self.theta, self.dom, spec, notes) == 0.0
        assert any("z" in n for n in notes)

    def test_nonfinite_derivative_excluded(self):
        f = _compile(r"y = k_1 \ln(x)", ["x"])
        dom = TrainingDomain({"x": VariableRange(-1, 1)}, 1.0)
        notes = []
        assert sign_consistency(f, np.array([1.0]), dom, InfluenceSpec([("x", -1)]), notes) == 1.0
        assert notes


class TestBootstrap:
    f = _compile("y = k_1 x", ["x"])

    def test_noise_free_gives_one(self):
        x = np.linspace(1, 10, 15)
        s, (lo, hi), failed = bootstrap_uncertainty(self.f, Dataset({"x": x, "y": 2 * x}), 5.0, B=100)
        assert s == pytest.approx(1.0, abs=1e-9) and failed == 0
        assert lo == pytest.approx(10.0) and hi == pytest.approx(10.0)

    def test_wide_interval_clamps_to_zero(self):
        s, (lo, hi), _ = bootstrap_uncertainty(self.f, _linear(0, sigma=0.5), 1e3, B=100, sigma_y=1e-3)
        assert hi - lo > 1e-3
        assert s == 0.0

    def test_zero_spread(self):
        with pytest.raises(UncertaintyError):
            bootstrap_uncertainty(self.f, Dataset({"x": [1.0, 2.0, 3.0], "y": [1.0, 1.0, 1.0]}), 2.0)

    def test_excessive_failures(self):
        f = _compile(r"y = k_1 \ln(x - k_2)", ["x"])
        data = Dataset({"x": np.linspace(1, 2, 10), "y": np.linspace(0, 1, 10)})
        with pytest.raises(BootstrapError):
            bootstrap_uncertainty(f, data, 1.5, B=50, theta0=[1.0, 5.0])

    def test_seeded(self):
        data = _linear(1)
        a = bootstrap_uncertainty(self.f, data, 5.0, B=100, seed=4)
        b = bootstrap_uncertainty(self.f, data, 5.0, B=100, seed=4)
        assert a == b

    def test_linear_score_range_and_coverage(self):
        f = _compile("y = k_1 x + k_2", ["x"])
        covered = 0
        reps = 10
        for seed in range(reps):
            data = _linear(seed)
            s, (lo, hi), _ = bootstrap_uncertainty(f, data, 5.0, B=200, seed=seed)
            assert 0.8 < s < 1.0
            covered += lo <= 10.0 <= hi
        assert covered >= 8


class TestScorePrediction:
    def test_in_domain_has_full_distance_score(self):
        E, Cd = jacobs_data()
        f = _compile(r"C_d = k_1 \ln(E / k_2)", ["E"])
        data = Dataset({"E": E, "C_d": Cd})
        res = fit(f, data)
        w = ConfidenceWeights(bootstrap_B=100)
        inside = score_prediction(f, res, data, 100.0, weights=w)
        outside = score_prediction(f, res, data, 300.0, influence_spec=[("E", 1)], n_assumptions=1, weights=w)
        assert inside.s_dist == 1.0 and inside.d_norm == 0.0
        assert outside.d_norm == pytest.approx(50 / 235)
        assert outside.s_assumption == pytest.approx(0.95) and outside.s_sign == 1.0
        for rep in (inside, outside):
            expected = total_confidence(rep.s_dist, rep.s_stat, rep.s_phys, rep.s_uncertainty)
            assert rep.c_total == pytest.approx(expected, abs=1e-12)
            assert 0 < rep.c_total < 1
        assert outside.c_total < inside.c_total
        assert "C_total" in outside.components_table()

    def test_multi_input_requires_mapping(self):
        f = _compile("y = k_1 a + k_2 b", ["a", "b"])
        rng = np.random.default_rng(0)
        a, b = rng.uniform(0, 1, 20), rng.uniform(0, 1, 20)
        data = Dataset({"a": a, "b": b, "y": a - b + rng.normal(0, 0.01, 20)})
        res = fit(f, data)
        with pytest.raises(ValueError):
            score_prediction(f, res, data, 0.5)
        rep = score_prediction(f, res, data, {"a": 2.0, "b": 0.5}, weights=ConfidenceWeights(bootstrap_B=50))
        assert rep.d_norm > 0


class TestSubgraphHarvest:
    def _subgraph(self, jacobs_kg):
        kg = jacobs_kg
        ee = add(kg, "exposure_energy", K.PROCESS_PARAMETER)
        cd = add(kg, "cure_depth", K.PERFORMANCE)
        rel(kg, "amkg://Variable/e", "corresponds_to", ee)
        rel(kg, "amkg://Variable/c_d", "corresponds_to", cd)
        rel(kg, ee, "influences", cd, sign=1)
        sg = Subgraph(list(kg.entities.values()), list(kg.relations.values()),
                      roles={"amkg://Equation/equation_cure_depth": "target"})
        return sg

    def test_influence_through_counterparts(self, jacobs_kg):
        spec = influence_spec_from_subgraph(self._subgraph(jacobs_kg), ["E"], "C_d")
        assert list(spec) == [("E", 1)]

    def test_assumption_count(self, jacobs_kg):
        sg = self._subgraph(jacobs_kg)
        assert count_assumptions(sg) == 1
        assert count_assumptions(sg, role="supporting") == 0
