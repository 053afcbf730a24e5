"""Expression evaluation: exact scalar folding and vectorized state evaluation."""

from __future__ import annotations

import operator
from fractions import Fraction
from typing import Callable, Mapping, Union

import numpy as np

from ..errors import ValidationError
from . import ast as A

Value = Union[Fraction, bool]

_ARITH = {"+": operator.add, "-": operator.sub, "*": operator.mul}
_CMP = {
    "=": operator.eq, "!=": operator.ne, "<": operator.lt,
    "<=": operator.le, ">": operator.gt, ">=": operator.ge,
}


def _fail(message: str, expr: A.Expr):
    pos = getattr(expr, "pos", None) or (None, None)
    raise ValidationError(message, pos[0], pos[1], reason="expression")


def evaluate(expr: A.Expr, env: Mapping[str, Value]) -> Value:
    """Evaluate ``expr`` exactly; numbers come back as ``Fraction``."""
    if isinstance(expr, A.Num):
        return expr.value
    if isinstance(expr, A.Bool):
        return expr.value
    if isinstance(expr, A.Ident):
        try:
            value = env[expr.name]
        except KeyError:
            _fail(f"unknown identifier {expr.name!r}", expr)
        if isinstance(value, (bool, np.bool_)):
            return bool(value)
        return Fraction(value)
    if isinstance(expr, A.Unary):
        inner = evaluate(expr.operand, env)
        if expr.op == "!":
            if not isinstance(inner, bool):
                _fail("'!' applied to a number", expr)
            return not inner
        if isinstance(inner, bool):
            _fail("'-' applied to a boolean", expr)
        return -inner
    if isinstance(expr, A.Binary):
        left = evaluate(expr.left, env)
        right = evaluate(expr.right, env)
        op = expr.op
        if op in ("&", "|"):
            if not (isinstance(left, bool) and isinstance(right, bool)):
                _fail(f"'{op}' needs boolean operands", expr)
            return (left and right) if op == "&" else (left or right)
        if op in ("=", "!="):
            if isinstance(left, bool) != isinstance(right, bool):
                _fail(f"'{op}' compares a boolean with a number", expr)
            return _CMP[op](left, right)
        if isinstance(left, bool) or isinstance(right, bool):
            _fail(f"'{op}' needs numeric operands", expr)
        if op in _CMP:
            return _CMP[op](left, right)
        return _ARITH[op](left, right)
    raise TypeError(f"not an expression: {expr!r}")


def substitute(expr: A.Expr, env: Mapping[str, Value]) -> A.Expr:
    """Replace identifiers bound in ``env`` by literals (positions kept)."""
    if isinstance(expr, A.Ident) and expr.name in env:
        value = env[expr.name]
        if isinstance(value, bool):
            return A.Bool(value, expr.pos)
        return A.Num(Fraction(value), expr.pos)
    if isinstance(expr, A.Unary):
        return A.Unary(expr.op, substitute(expr.operand, env), expr.pos)
    if isinstance(expr, A.Binary):
        return A.Binary(expr.op, substitute(expr.left, env), substitute(expr.right, env), expr.pos)
    return expr


def compile_vectorized(expr: A.Expr, constants: Mapping[str, Value],
                       columns: Mapping[str, int]) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``expr`` into a function of a 2-D state array (rows are states).

    Returns arrays of bool, int64 or float64 depending on the expression.
    Identifiers resolve to state columns first, then constants.
    """

    def build(e):
        if isinstance(e, A.Num):
            v = int(e.value) if e.value.denominator == 1 else float(e.value)
            return lambda S: v
        if isinstance(e, A.Bool):
            v = e.value
            return lambda S: v
        if isinstance(e, A.Ident):
            if e.name in columns:
                j = columns[e.name]
                return lambda S: S[:, j].astype(np.int64)
            if e.name in constants:
                c = constants[e.name]
                if isinstance(c, bool):
                    return lambda S: c
                v = int(c) if Fraction(c).denominator == 1 else float(c)
                return lambda S: v
            _fail(f"unknown identifier {e.name!r}", e)
        if isinstance(e, A.Unary):
            f = build(e.operand)
            if e.op == "!":
                return lambda S: np.logical_not(f(S))
            return lambda S: np.negative(f(S))
        if isinstance(e, A.Binary):
            f, g = build(e.left), build(e.right)
            if e.op == "&":
                return lambda S: np.logical_and(f(S), g(S))
            if e.op == "|":
                return lambda S: np.logical_or(f(S), g(S))
            fn = _CMP.get(e.op) or _ARITH[e.op]
            return lambda S: fn(f(S), g(S))
        raise TypeError(f"not an expression: {e!r}")

    inner = build(expr)

    def run(states: np.ndarray) -> np.ndarray:
        out = inner(states)
        return np.broadcast_to(np.asarray(out), (states.shape[0],))

    return run
