"""Tiny expression language for coefficient and test functions of one variable ``x``.

Accepted: numeric constants, ``x``, ``pi``, ``+ - * /``, ``**`` with a
non-negative integer exponent, and ``sin``, ``cos``, ``exp``.  Division is
allowed only by constant expressions.  Parsing goes through the Python AST
under a whitelist and builds a sympy expression directly, so nothing is
evaluated; derivatives are taken symbolically.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy as sp

from .errors import ConfigError

X = sp.Symbol("x", real=True)
_FUNCS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp}
_NAMES = {"x": X, "pi": sp.pi}


def _build(node) -> sp.Expr:
    if isinstance(node, ast.Expression):
        return _build(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return sp.nsimplify(node.value) if isinstance(node.value, int) else sp.Float(node.value)
    if isinstance(node, ast.Name):
        if node.id in _NAMES:
            return _NAMES[node.id]
        raise ConfigError(f"unknown name {node.id!r} in expression")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _build(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        a, b = _build(node.left), _build(node.right)
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        if isinstance(node.op, ast.Mult):
            return a * b
        if isinstance(node.op, ast.Div):
            if b.free_symbols or b == 0:
                raise ConfigError("division only by nonzero constants")
            return a / b
        if isinstance(node.op, ast.Pow):
            if b.free_symbols or not (b.is_integer and b >= 0):
                raise ConfigError("exponents must be non-negative integer constants")
            return a ** b
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
            and len(node.args) == 1 and not node.keywords:
        return _FUNCS[node.func.id](_build(node.args[0]))
    raise ConfigError(f"unsupported syntax: {ast.dump(node)[:60]}")


def parse(text: str) -> sp.Expr:
    """Parse ``text`` into a sympy expression in ``x``.

    Raises
    ------
    ConfigError
        On anything outside the whitelist.
    """
    if not isinstance(text, str) or len(text) > 500:
        raise ConfigError("expression must be a string of at most 500 characters")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    return _build(tree)


def _vectorise(e: sp.Expr) -> Callable:
    fn = sp.lambdify(X, e, modules="numpy")

    def call(x):
        x = np.asarray(x, dtype=float)
        return np.asarray(fn(x), dtype=float) + np.zeros_like(x)
    return call


@dataclass(frozen=True)
class Expression:
    """A parsed expression with vectorised value and first two derivatives."""

    text: str
    expr: sp.Expr
    f: Callable
    df: Callable
    d2f: Callable

    def __call__(self, x):
        return self.f(x)

    @property
    def is_polynomial(self) -> bool:
        return self.expr.is_polynomial(X)

    @property
    def degree(self) -> int | None:
        return int(sp.degree(self.expr, X)) if self.is_polynomial and self.expr != 0 else (0 if self.expr == 0 else None)


def compile_expression(text: str) -> Expression:
    e = parse(text)
    d1 = sp.diff(e, X)
    d2 = sp.diff(d1, X)
    return Expression(text, e, _vectorise(e), _vectorise(d1), _vectorise(d2))
