"""Compile expression trees into vectorized numpy evaluators ``f(x; theta)``."""

from __future__ import annotations

import numpy as np

from ..errors import CompileError
from .latex import Node, free_symbols


class Evaluator:
    """Callable ``f(x, theta)`` built from an expression tree.

    ``x`` may be a mapping symbol -> array, a 2-D array with one column per
    input (in ``inputs`` order), a 1-D array when there is a single input, or
    a scalar. ``theta`` follows ``parameters`` order. Domain violations give
    nan/inf, never exceptions.
    """

    def __init__(self, expr: Node, inputs, parameters, constants=None, target=None):
        self.expr = expr
        self.inputs = list(inputs)
        self.parameters = list(parameters)
        self.constants = dict(constants or {})
        self.target = target
        variables, params = free_symbols(expr)
        bound = set(self.inputs) | set(self.parameters) | set(self.constants)
        unbound = [s for s in variables + params if s not in bound]
        if unbound:
            raise CompileError(f"unbound symbol(s): {', '.join(unbound)}")
        self._fn = self._build(expr)

    def _build(self, node):
        op = node.op
        if op == "const":
            v = float(node.value)
            return lambda x, t: v
        if op == "var" or op == "param":
            name = node.value
            if name in self.parameters:
                k = self.parameters.index(name)
                return lambda x, t: t[k]
            if name in self.inputs:
                k = self.inputs.index(name)
                return lambda x, t: x[k]
            v = float(self.constants[name])
            return lambda x, t: v
        fs = [self._build(a) for a in node.args]
        if op == "add":
            a, b = fs
            return lambda x, t: a(x, t) + b(x, t)
        if op == "sub":
            a, b = fs
            return lambda x, t: a(x, t) - b(x, t)
        if op == "mul":
            a, b = fs
            return lambda x, t: a(x, t) * b(x, t)
        if op == "div":
            a, b = fs
            return lambda x, t: np.divide(a(x, t), b(x, t))
        if op == "pow":
            a, b = fs
            return lambda x, t: np.power(a(x, t), b(x, t))
        if op == "neg":
            (a,) = fs
            return lambda x, t: -a(x, t)
        if op == "ln":
            (a,) = fs
            return lambda x, t: np.log(a(x, t))
        if op == "exp":
            (a,) = fs
            return lambda x, t: np.exp(a(x, t))
        raise CompileError(f"unknown node op {op!r}")

    def columns(self, x):
        """Normalize ``x`` into a list of float arrays, one per input."""
        if isinstance(x, dict):
            try:
                return [np.asarray(x[name], dtype=float) for name in self.inputs]
            except KeyError as exc:
                raise CompileError(f"missing input column {exc.args[0]!r}") from None
        arr = np.asarray(x, dtype=float)
        if len(self.inputs) == 1:
            if arr.ndim == 2 and arr.shape[1] == 1:
                arr = arr[:, 0]
            return [arr]
        if arr.ndim == 1 and arr.shape[0] == len(self.inputs):
            return [arr[k] for k in range(len(self.inputs))]
        if arr.ndim == 2 and arr.shape[1] == len(self.inputs):
            return [arr[:, k] for k in range(len(self.inputs))]
        raise CompileError(f"cannot map input of shape {arr.shape} onto {self.inputs}")

    def __call__(self, x, theta):
        cols = self.columns(x)
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (len(self.parameters),):
            raise CompileError(f"expected {len(self.parameters)} parameters, got shape {theta.shape}")
        with np.errstate(all="ignore"):
            out = self._fn(cols, theta)
            shape = np.broadcast(*cols).shape if cols else ()
            return np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else np.float64(out)

    def evaluate_columns(self, cols, theta):
        """Fast path for fitting: ``cols`` already a list of arrays."""
        with np.errstate(all="ignore"):
            return self._fn(cols, theta)


def compile_expression(expr: Node, inputs, parameters, constants=None, target=None) -> Evaluator:
    return Evaluator(expr, inputs, parameters, constants=constants, target=target)
