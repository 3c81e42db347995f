"""Composite confidence score for extrapolated predictions.

    C_total = a*S_dist + b*S_stat + g*S_phys + d*S_uncertainty

with S_dist = exp(-alpha_d * d_norm), S_stat = (S_fit + S_uncertainty)/2 and
S_phys = S_regime * S_assumption * S_sign. Because S_uncertainty appears in
S_stat as well, its effective weight is b/2 + d (0.25 with the defaults).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BootstrapError, FitError, UncertaintyError
from .equations.fitting import Dataset, fit

log = logging.getLogger(__name__)

S_REGIME = 1.0
MAX_BOOTSTRAP_FAILURE = 0.2
MIN_BOOTSTRAP = 50


@dataclass
class ConfidenceWeights:
    alpha: float = 0.4
    beta: float = 0.3
    gamma: float = 0.2
    delta: float = 0.1
    alpha_d: float = 2.0
    bootstrap_B: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.alpha_d <= 0:
            raise ValueError("alpha_d must be positive")

    @property
    def total(self) -> float:
        return self.alpha + self.beta + self.gamma + self.delta

    @property
    def effective_uncertainty_weight(self) -> float:
        return self.beta / 2 + self.delta


@dataclass
class VariableRange:
    x_min: float
    x_max: float
    unit: str = ""

    def __post_init__(self):
        if self.x_max < self.x_min:
            raise ValueError(f"x_max {self.x_max} < x_min {self.x_min}")


@dataclass
class TrainingDomain:
    ranges: dict
    sigma_y: float

    def __post_init__(self):
        if self.sigma_y < 0:
            raise ValueError("sigma_y must be >= 0")

    @classmethod
    def from_dataset(cls, data: Dataset, inputs, target):
        ranges = {
            s: VariableRange(float(np.min(data[s])), float(np.max(data[s])), data.units.get(s, ""))
            for s in inputs
        }
        return cls(ranges, float(np.std(data[target], ddof=1)))

    def centroid(self) -> dict:
        return {s: 0.5 * (r.x_min + r.x_max) for s, r in self.ranges.items()}


@dataclass
class InfluenceSpec:
    """Expected sign of d(target)/d(input) per input, harvested from the graph."""

    entries: list = field(default_factory=list)  # (input symbol, sign)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


@dataclass
class ConfidenceReport:
    s_dist: float
    s_fit: float
    s_uncertainty: float
    s_stat: float
    s_assumption: float
    s_sign: float
    s_regime: float
    s_phys: float
    c_total: float
    d_norm: float
    ci: tuple = (math.nan, math.nan)
    notes: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["ci"] = [None if not np.isfinite(v) else float(v) for v in self.ci]
        return d

    def components_table(self, weights: ConfidenceWeights | None = None) -> str:
        w = weights or ConfidenceWeights()
        rows = [
            ("S_dist", self.s_dist, w.alpha),
            ("S_stat", self.s_stat, w.beta),
            ("S_phys", self.s_phys, w.gamma),
            ("S_uncertainty", self.s_uncertainty, w.delta),
        ]
        lines = [f"{'component':<14} {'score':>8} {'weight':>7} {'contrib':>8}"]
        for name, s, wt in rows:
            lines.append(f"{name:<14} {s:8.4f} {wt:7.2f} {s * wt:8.4f}")
        lines.append(f"{'C_total':<14} {self.c_total:8.4f}")
        return "\n".join(lines)


def extrapolation_distance(x: float, x_min: float, x_max: float) -> float:
    if x > x_max:
        return float(x - x_max)
    if x < x_min:
        return float(x_min - x)
    return 0.0


def normalized_distance(distances: dict, domain: TrainingDomain, notes=None) -> float:
    """Euclidean combination of range-normalized distances.

    Zero-width ranges use divisor 1; the variable is recorded in ``notes``.
    """
    total = 0.0
    for s, d in distances.items():
        r = domain.ranges[s]
        width = r.x_max - r.x_min
        if width <= 0:
            width = 1.0
            if notes is not None:
                notes.append(f"zero-width training range for {s}; divisor 1 used")
        total += (d / width) ** 2
    return math.sqrt(total)


def distance_confidence(d_norm: float, alpha_d: float = 2.0) -> float:
    if alpha_d <= 0:
        raise ValueError("alpha_d must be positive")
    return math.exp(-alpha_d * d_norm)


def fit_confidence(r_squared: float) -> float:
    if not np.isfinite(r_squared):
        return 0.0
    return float(min(1.0, max(0.0, r_squared)))


def bootstrap_uncertainty(evaluator, data: Dataset, x_star, B=500, seed=0, sigma_y=None,
                          target=None, theta0=None):
    """Percentile-bootstrap 95% interval of the prediction at ``x_star``.

    Returns ``(s_uncertainty, (lo, hi), n_failed)``. The resample index table
    is drawn up front from ``seed`` so results do not depend on execution
    order. Refits start from ``theta0`` when given.
    """
    target = target or evaluator.target
    if sigma_y is None:
        sigma_y = float(np.std(data[target], ddof=1))
    if not sigma_y > 0:
        raise UncertaintyError("sigma_y is zero; uncertainty score undefined")
    if B < MIN_BOOTSTRAP:
        raise ValueError(f"B must be >= {MIN_BOOTSTRAP}")
    rng = np.random.default_rng(seed)
    index = rng.integers(0, data.n, size=(B, data.n))
    preds = []
    failed = 0
    for b in range(B):
        sample = data.subset(index[b])
        try:
            res = fit(evaluator, sample, target=target, theta0=theta0, seed=seed + b)
        except FitError:
            failed += 1
            continue
        val = float(np.asarray(evaluator(x_star, res.theta)).ravel()[0])
        if not np.isfinite(val):
            failed += 1
            continue
        preds.append(val)
    if failed > MAX_BOOTSTRAP_FAILURE * B:
        raise BootstrapError(f"{failed} of {B} bootstrap refits failed")
    lo, hi = np.percentile(np.asarray(preds), [2.5, 97.5])
    width = float(hi - lo)
    s = 1.0 - min(1.0, width / sigma_y)
    return s, (float(lo), float(hi)), failed


def assumption_penalty(n_assumptions: int) -> float:
    if n_assumptions < 0:
        raise ValueError("assumption count must be >= 0")
    return 1.0 - min(0.3, 0.05 * n_assumptions)


def sign_consistency(evaluator, theta, domain: TrainingDomain, influence_spec, notes=None) -> float:
    """1 - mismatches/matched, comparing derivative signs at the domain centroid.

    Pairs with expected sign 0, inputs the model does not use, or a
    non-finite derivative are left out of the matched count.
    """
    centroid = domain.centroid()
    matched = mismatched = 0
    for symbol, expected in influence_spec:
        if expected == 0:
            continue
        if symbol not in evaluator.inputs:
            if notes is not None:
                notes.append(f"influence on {symbol} not an input of the model; unmatched")
            continue
        point = {s: np.asarray(centroid[s], dtype=float) for s in evaluator.inputs}
        h = 1e-6 * max(1.0, abs(point[symbol]))
        up = dict(point)
        dn = dict(point)
        up[symbol] = point[symbol] + h
        dn[symbol] = point[symbol] - h
        deriv = float((evaluator(up, theta) - evaluator(dn, theta)) / (2 * h))
        if not np.isfinite(deriv):
            if notes is not None:
                notes.append(f"non-finite derivative for {symbol}; excluded")
            continue
        matched += 1
        if int(np.sign(deriv)) != int(np.sign(expected)):
            mismatched += 1
    if matched == 0:
        return 1.0
    return 1.0 - mismatched / matched


def physics_confidence(s_assumption: float, s_sign: float, s_regime: float = S_REGIME) -> float:
    return s_regime * s_assumption * s_sign


def statistical_confidence(s_fit: float, s_uncertainty: float) -> float:
    return (s_fit + s_uncertainty) / 2.0


def total_confidence(s_dist, s_stat, s_phys, s_uncertainty, weights: ConfidenceWeights | None = None) -> float:
    w = weights or ConfidenceWeights()
    c = w.alpha * s_dist + w.beta * s_stat + w.gamma * s_phys + w.delta * s_uncertainty
    return float(min(1.0, max(0.0, c)))


def score_prediction(evaluator, fit_result, data: Dataset, x_star, domain: TrainingDomain | None = None,
                     influence_spec=None, n_assumptions=0, weights: ConfidenceWeights | None = None,
                     target=None) -> ConfidenceReport:
    """Score one fitted model at one evaluation point ``x_star``.

    ``x_star`` is a scalar for single-input models or a mapping symbol -> value.
    """
    w = weights or ConfidenceWeights()
    target = target or evaluator.target
    domain = domain or TrainingDomain.from_dataset(data, evaluator.inputs, target)
    if not isinstance(x_star, dict):
        if len(evaluator.inputs) != 1:
            raise ValueError("x_star must be a mapping for multi-input models")
        x_star = {evaluator.inputs[0]: float(x_star)}
    notes = []
    dists = {
        s: extrapolation_distance(float(x_star[s]), domain.ranges[s].x_min, domain.ranges[s].x_max)
        for s in evaluator.inputs
    }
    d_norm = normalized_distance(dists, domain, notes)
    s_dist = distance_confidence(d_norm, w.alpha_d)
    s_fit = fit_confidence(fit_result.r_squared)
    s_unc, ci, failed = bootstrap_uncertainty(
        evaluator, data, x_star, B=w.bootstrap_B, seed=w.seed, sigma_y=domain.sigma_y,
        target=target, theta0=fit_result.theta,
    )
    if failed:
        notes.append(f"{failed} bootstrap refit(s) failed and were dropped")
    s_stat = statistical_confidence(s_fit, s_unc)
    s_assump = assumption_penalty(n_assumptions)
    s_sign = sign_consistency(evaluator, fit_result.theta, domain, influence_spec or [], notes)
    s_phys = physics_confidence(s_assump, s_sign)
    c = total_confidence(s_dist, s_stat, s_phys, s_unc, w)
    return ConfidenceReport(
        s_dist=s_dist, s_fit=s_fit, s_uncertainty=s_unc, s_stat=s_stat,
        s_assumption=s_assump, s_sign=s_sign, s_regime=S_REGIME, s_phys=s_phys,
        c_total=c, d_norm=d_norm, ci=ci, notes=notes,
    )


def _symbols_of(subgraph):
    """uri -> symbols it stands for: a Variable's own symbol plus corresponds_to partners."""
    out = {e.uri: set() for e in subgraph.entities}
    kinds = {e.uri: e for e in subgraph.entities}
    for e in subgraph.entities:
        if e.symbol:
            out[e.uri].add(e.symbol)
    for rel in subgraph.relations:
        if rel.predicate.value != "corresponds_to":
            continue
        for a, b in ((rel.subject, rel.object), (rel.object, rel.subject)):
            partner = kinds.get(b)
            if a in out and partner is not None and partner.symbol:
                out[a].add(partner.symbol)
    return out


def influence_spec_from_subgraph(subgraph, inputs, target) -> InfluenceSpec:
    """Expected d(target)/d(input) signs from the subgraph's influences relations.

    An influences endpoint maps to a symbol through its own symbol or a
    corresponds_to partner; pairs without such a mapping are not matched.
    """
    syms = _symbols_of(subgraph)
    entries = []
    for rel in sorted(subgraph.relations, key=lambda r: r.key):
        if rel.predicate.value != "influences" or rel.sign is None:
            continue
        if target not in syms.get(rel.object, ()):
            continue
        for x in inputs:
            if x in syms.get(rel.subject, ()) and all(x != e[0] for e in entries):
                entries.append((x, int(rel.sign)))
    return InfluenceSpec(entries)


def count_assumptions(subgraph, role="target") -> int:
    """Distinct assumptions required by the subgraph's equations with ``role``."""
    eqs = {e.uri for e in subgraph.equations(role)}
    found = {r.object for r in subgraph.relations
             if r.predicate.value == "requires_assumption" and r.subject in eqs}
    return len(found)


def report_csv_header():
    return ["model", "x_star", "s_dist", "s_fit", "s_uncertainty", "s_stat", "s_assumption",
            "s_sign", "s_regime", "s_phys", "c_total", "d_norm"]


def report_csv_row(model_id, x_star, rep: ConfidenceReport):
    xs = json.dumps(x_star, sort_keys=True) if isinstance(x_star, dict) else repr(float(x_star))
    return [model_id, xs] + [repr(float(getattr(rep, k))) for k in report_csv_header()[2:]]
