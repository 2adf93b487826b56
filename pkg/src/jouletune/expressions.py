"""A tiny expression language for restrictions and user-defined metrics.

Expressions use ordinary Python syntax restricted to arithmetic, comparisons
(including chained ones), boolean conjunction/disjunction, and the ``min``,
``max``, and ``abs`` builtins. They are evaluated by a small AST interpreter
against a mapping of names to scalar values, so no arbitrary code can run.

    >>> Expression("Kwg % Kwi == 0")({"Kwg": 32, "Kwi": 8})
    True
    >>> Expression("total_flops / time / 1e9")({"total_flops": 2e9, "time": 0.5})
    4.0
"""

from __future__ import annotations

import ast
import operator
from typing import Mapping

from .errors import ExpressionError, UnknownNameError

_BINARY_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.FloorDiv: operator.floordiv,
    ast.Mod: operator.mod,
    ast.Pow: operator.pow,
}

_COMPARE_OPS = {
    ast.Eq: operator.eq,
    ast.NotEq: operator.ne,
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
}

_UNARY_OPS = {
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
    ast.Not: operator.not_,
}

_FUNCTIONS = {"min": min, "max": max, "abs": abs}


class Expression:
    """A compiled expression over named scalar values.

    Parsing happens once at construction; evaluation walks the validated
    AST. The set of referenced names is exposed as ``names`` so callers can
    check them against the parameters they actually provide.
    """

    __slots__ = ("source", "names", "_tree")

    def __init__(self, source: str):
        if not isinstance(source, str) or not source.strip():
            raise ExpressionError(f"empty or non-string expression: {source!r}")
        self.source = source
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from exc
        names: set[str] = set()
        _validate(tree.body, source, names)
        self._tree = tree.body
        self.names = frozenset(names)

    def evaluate(self, env: Mapping[str, object]):
        """Evaluate against ``env``; unknown names raise UnknownNameError."""
        return _eval(self._tree, env, self.source)

    __call__ = evaluate

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and self.source == other.source

    def __hash__(self):
        return hash(self.source)


def _validate(node: ast.AST, source: str, names: set[str]) -> None:
    match node:
        case ast.Constant(value=v) if isinstance(v, (int, float, bool)):
            return
        case ast.Name(id=name):
            names.add(name)
        case ast.BinOp(left=l, op=op, right=r) if type(op) in _BINARY_OPS:
            _validate(l, source, names)
            _validate(r, source, names)
        case ast.UnaryOp(op=op, operand=v) if type(op) in _UNARY_OPS:
            _validate(v, source, names)
        case ast.BoolOp(values=vals):
            for v in vals:
                _validate(v, source, names)
        case ast.Compare(left=l, ops=ops, comparators=rest):
            if any(type(op) not in _COMPARE_OPS for op in ops):
                raise ExpressionError(f"unsupported comparison in {source!r}")
            _validate(l, source, names)
            for v in rest:
                _validate(v, source, names)
        case ast.Call(func=ast.Name(id=fn), args=args, keywords=[]):
            if fn not in _FUNCTIONS:
                raise ExpressionError(
                    f"unsupported function {fn!r} in {source!r}; "
                    f"allowed: {sorted(_FUNCTIONS)}"
                )
            for v in args:
                _validate(v, source, names)
        case _:
            raise ExpressionError(
                f"unsupported syntax {type(node).__name__!r} in {source!r}"
            )


def _eval(node: ast.AST, env: Mapping[str, object], source: str):
    match node:
        case ast.Constant(value=v):
            return v
        case ast.Name(id=name):
            try:
                return env[name]
            except KeyError:
                raise UnknownNameError(name, f"expression {source!r}") from None
        case ast.BinOp(left=l, op=op, right=r):
            return _BINARY_OPS[type(op)](_eval(l, env, source), _eval(r, env, source))
        case ast.UnaryOp(op=op, operand=v):
            return _UNARY_OPS[type(op)](_eval(v, env, source))
        case ast.BoolOp(op=op, values=vals):
            if isinstance(op, ast.And):
                result = True
                for v in vals:
                    result = _eval(v, env, source)
                    if not result:
                        return result
                return result
            result = False
            for v in vals:
                result = _eval(v, env, source)
                if result:
                    return result
            return result
        case ast.Compare(left=l, ops=ops, comparators=rest):
            left = _eval(l, env, source)
            for op, comparator in zip(ops, rest):
                right = _eval(comparator, env, source)
                if not _COMPARE_OPS[type(op)](left, right):
                    return False
                left = right
            return True
        case ast.Call(func=ast.Name(id=fn), args=args):
            return _FUNCTIONS[fn](*(_eval(v, env, source) for v in args))
    raise ExpressionError(f"unsupported syntax in {source!r}")  # pragma: no cover
