"""Nonlinear least squares for compiled candidate equations.

The optimizer is a damped Gauss-Newton (Levenberg-Marquardt) iteration with a
central finite-difference Jacobian. Damping is multiplicative: x10 after a
rejected step, /10 after an accepted one.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from ..errors import CompileError, FitError

log = logging.getLogger(__name__)

NONFINITE_PENALTY = 1e6
ATOL = 1e-10
RTOL = 1e-8
DEFAULT_MAX_ITER = 500


@dataclass
class Dataset:
    """Named numeric columns (replicate rows allowed) with optional units."""

    columns: dict
    units: dict = field(default_factory=dict)
    dropped_rows: int = 0

    def __post_init__(self):
        cols = {k: np.asarray(v, dtype=float).ravel() for k, v in self.columns.items()}
        lengths = {len(v) for v in cols.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have unequal lengths {sorted(lengths)}")
        if cols:
            keep = np.logical_and.reduce([np.isfinite(v) for v in cols.values()])
            self.dropped_rows += int((~keep).sum())
            cols = {k: v[keep] for k, v in cols.items()}
        self.columns = cols

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def __getitem__(self, key):
        return self.columns[key]

    def __contains__(self, key):
        return key in self.columns

    def subset(self, idx):
        return Dataset({k: v[idx] for k, v in self.columns.items()}, dict(self.units))

    def to_csv(self, path):
        names = list(self.columns)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            if any(self.units.get(n) for n in names):
                w.writerow(["unit:" + (self.units.get(names[0]) or "")] + [self.units.get(n) or "" for n in names[1:]])
            for row in zip(*(self.columns[n] for n in names)):
                w.writerow([repr(float(v)) for v in row])


def read_csv(path) -> Dataset:
    """Read a dataset CSV: header of symbols, optional ``unit:`` line, numeric rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty dataset")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    units = {}
    if body and body[0][0].strip().lower().startswith("unit:"):
        first = body[0][0].strip()[5:].strip()
        vals = [first] + [c.strip() for c in body[0][1:]]
        units = {h: u for h, u in zip(header, vals) if u}
        body = body[1:]
    cols = {h: [] for h in header}
    for r in body:
        for h, cell in zip(header, r):
            try:
                cols[h].append(float(cell))
            except ValueError:
                cols[h].append(np.nan)
        for h in header[len(r):]:
            cols[h].append(np.nan)
    ds = Dataset(cols, units)
    if ds.dropped_rows:
        log.warning("%s: dropped %d non-finite row(s)", path, ds.dropped_rows)
    return ds


@dataclass
class FitResult:
    parameters: list
    theta: np.ndarray
    covariance: Optional[np.ndarray]
    std_errors: np.ndarray
    ci95: np.ndarray
    r_squared: float
    rmse: float
    residuals: np.ndarray
    fitted: np.ndarray
    n_obs: int
    n_params: int
    converged: bool
    iterations: int = 0
    ssr: float = 0.0
    covariance_available: bool = True
    restarts: int = 0

    @property
    def dof(self) -> int:
        return self.n_obs - self.n_params

    def params(self) -> dict:
        return dict(zip(self.parameters, (float(v) for v in self.theta)))

    def to_dict(self):
        def fl(v):
            v = float(v)
            return v if np.isfinite(v) else None

        return {
            "parameters": list(self.parameters),
            "theta": [fl(v) for v in self.theta],
            "std_errors": [fl(v) for v in self.std_errors],
            "ci95": [[fl(lo), fl(hi)] for lo, hi in self.ci95],
            "covariance": None if self.covariance is None else [[fl(v) for v in row] for row in self.covariance],
            "covariance_available": self.covariance_available,
            "r_squared": fl(self.r_squared),
            "rmse": fl(self.rmse),
            "n_obs": self.n_obs,
            "n_params": self.n_params,
            "converged": self.converged,
            "iterations": self.iterations,
            "restarts": self.restarts,
        }


def fd_jacobian(func, theta, f0=None):
    """Central-difference Jacobian d f / d theta, step ``1e-6 * max(1, |theta|)``."""
    theta = np.asarray(theta, dtype=float)
    cols = []
    for k in range(theta.size):
        h = 1e-6 * max(1.0, abs(theta[k]))
        up = theta.copy()
        dn = theta.copy()
        up[k] += h
        dn[k] -= h
        cols.append((func(up) - func(dn)) / (2 * h))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def _penalized(r):
    r = np.asarray(r, dtype=float)
    bad = ~np.isfinite(r)
    if bad.any():
        r = r.copy()
        r[bad] = NONFINITE_PENALTY
    return r


def _levenberg_marquardt(model, y, theta0, max_iter):
    theta = np.asarray(theta0, dtype=float).copy()
    r = _penalized(y - model(theta))
    ssr = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = fd_jacobian(model, theta)
        if not np.all(np.isfinite(J)):
            J = np.where(np.isfinite(J), J, 0.0)
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            cand = theta + step
            r_new = _penalized(y - model(cand))
            ssr_new = float(r_new @ r_new)
            if ssr_new <= ssr:
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no descent direction left: stationary up to numerical precision
            converged = bool(np.all(np.isfinite(r)) and np.all(np.abs(r) < NONFINITE_PENALTY))
            break
        small_step = np.all(np.abs(step) <= ATOL + RTOL * np.abs(theta))
        small_gain = (ssr - ssr_new) <= 1e-15 * max(ssr, 1e-300) or ssr_new == 0.0
        theta, r, ssr = cand, r_new, ssr_new
        lam = max(lam / 10, 1e-12)
        if small_step or small_gain:
            converged = True
            break
    return theta, ssr, converged, it


def fit(evaluator, data: Dataset, target=None, theta0=None, max_iter=DEFAULT_MAX_ITER,
        seed=0, restarts=1) -> FitResult:
    """Least-squares fit of ``evaluator`` to ``data[target]``.

    ``theta0`` defaults to all ones. If the start point produces non-finite
    predictions or the iteration does not converge, the fit is retried from a
    seeded perturbation of the start (``restarts`` times) before failing.
    """
    target = target or evaluator.target
    if target is None or target not in data:
        raise FitError(f"target column {target!r} not in dataset")
    missing = [s for s in evaluator.inputs if s not in data]
    if missing:
        raise CompileError(f"dataset lacks input column(s) {missing}")
    y = data[target]
    n, p = len(y), len(evaluator.parameters)
    if n <= p:
        raise FitError(f"need more observations than parameters (n={n}, p={p})")
    cols = [data[s] for s in evaluator.inputs]

    def model(theta):
        out = evaluator.evaluate_columns(cols, theta)
        return np.broadcast_to(np.asarray(out, dtype=float), y.shape)

    start = np.ones(p) if theta0 is None else np.asarray(theta0, dtype=float)
    rng = np.random.default_rng(seed)
    attempt = 0
    theta = start
    while True:
        pred0 = model(start)
        if np.all(np.isfinite(pred0)):
            theta, ssr, converged, iters = _levenberg_marquardt(model, y, start, max_iter)
            if converged and np.all(np.isfinite(model(theta))):
                break
        else:
            converged, iters = False, 0
        if attempt >= restarts:
            raise FitError(
                f"fit did not converge after {attempt + 1} attempt(s)", last_theta=np.asarray(theta)
            )
        attempt += 1
        start = start * (1.0 + 0.5 * rng.standard_normal(p)) + 0.1 * rng.standard_normal(p)

    fitted = model(theta).copy()
    resid = y - fitted
    ssr = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    if sst > 0:
        r2 = 1.0 - ssr / sst
    else:
        r2 = 1.0 if ssr == 0 else 0.0
    rmse = float(np.sqrt(ssr / n))
    dof = n - p
    J = fd_jacobian(model, theta)
    cov = None
    cov_ok = False
    if p:
        JTJ = J.T @ J
        if np.all(np.isfinite(JTJ)) and np.linalg.matrix_rank(JTJ) == p:
            try:
                cov = (ssr / dof) * np.linalg.inv(JTJ)
                cov_ok = bool(np.all(np.isfinite(cov)))
            except np.linalg.LinAlgError:
                cov = None
        if not cov_ok:
            cov = None
    if cov_ok:
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
    else:
        se = np.full(p, np.nan)
    half = stats.t.ppf(0.975, dof) * se
    ci = np.column_stack([theta - half, theta + half]) if p else np.zeros((0, 2))
    return FitResult(
        parameters=list(evaluator.parameters),
        theta=np.asarray(theta, dtype=float),
        covariance=cov,
        std_errors=se,
        ci95=ci,
        r_squared=float(r2),
        rmse=rmse,
        residuals=resid,
        fitted=fitted,
        n_obs=n,
        n_params=p,
        converged=True,
        iterations=iters,
        ssr=ssr,
        covariance_available=cov_ok,
        restarts=attempt,
    )


def predict(result: FitResult, evaluator, x):
    """Evaluate the fitted model at ``x``; finiteness is the caller's concern."""
    return evaluator(x, result.theta)


def fit_table(result: FitResult, evaluator, data: Dataset, path, target=None):
    """Write the (inputs..., y_observed, y_fitted, residual) CSV report."""
    target = target or evaluator.target
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(evaluator.inputs) + ["y_observed", "y_fitted", "residual"])
        for i in range(data.n):
            w.writerow([repr(float(data[s][i])) for s in evaluator.inputs]
                       + [repr(float(data[target][i])), repr(float(result.fitted[i])),
                          repr(float(result.residuals[i]))])


def dumps_fit(result: FitResult) -> str:
    return json.dumps(result.to_dict(), sort_keys=True, indent=2)


def write_fit_json(result: FitResult, path):
    Path(path).write_text(dumps_fit(result) + "\n", encoding="utf-8")
