"""Arithmetic expressions for structural assignment functions.

Expressions are written in Python syntax restricted to numeric literals,
variable names, ``+ - * /``, unary minus, ``**2`` and the functions
``square``, ``exp``, ``log`` and ``sigmoid``. The name ``U`` refers to the
node's own noise term.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np
from scipy.special import expit

from .errors import DomainError, ExpressionError

NOISE = "U"
UNARY = ("negate", "square", "exp", "log", "sigmoid")
BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide}


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Unary, Binary]

_AST_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}


def parse(text: str) -> Expr:
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression {text!r}: {exc.msg}") from None
    return _convert(tree.body, text)


def _convert(node: ast.AST, text: str) -> Expr:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return Const(float(node.value))
    if isinstance(node, ast.Name):
        return Var(node.id)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        arg = _convert(node.operand, text)
        return Unary("negate", arg) if isinstance(node.op, ast.USub) else arg
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            if isinstance(node.right, ast.Constant) and node.right.value == 2:
                return Unary("square", _convert(node.left, text))
            raise ExpressionError(f"only **2 is supported in {text!r}")
        op = _AST_BINOPS.get(type(node.op))
        if op is None:
            raise ExpressionError(f"unsupported operator in {text!r}")
        return Binary(op, _convert(node.left, text), _convert(node.right, text))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id in UNARY and len(node.args) == 1 and not node.keywords:
        return Unary(node.func.id, _convert(node.args[0], text))
    raise ExpressionError(f"unsupported construct {ast.dump(node)[:40]}... in {text!r}")


def names(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Unary):
        return names(e.arg)
    if isinstance(e, Binary):
        return names(e.left) | names(e.right)
    return set()


def to_string(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "negate":
            return f"-({to_string(e.arg)})"
        return f"{e.op}({to_string(e.arg)})"
    return f"({to_string(e.left)} {e.op} {to_string(e.right)})"


def evaluate(e: Expr, env: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    """Vectorized evaluation; raises DomainError carrying the first bad row."""
    if isinstance(e, Const):
        return np.full(n, e.value)
    if isinstance(e, Var):
        try:
            return np.broadcast_to(np.asarray(env[e.name], dtype=float), (n,))
        except KeyError:
            raise ExpressionError(f"undeclared name {e.name!r}") from None
    if isinstance(e, Unary):
        x = evaluate(e.arg, env, n)
        if e.op == "negate":
            return -x
        if e.op == "square":
            return x * x
        if e.op == "sigmoid":
            return expit(x)
        if e.op == "log":
            bad = ~(x > 0)
            if bad.any():
                row = int(np.flatnonzero(bad)[0])
                raise DomainError(f"log of non-positive value {x[row]!r}", row)
            return np.log(x)
        with np.errstate(over="ignore"):
            out = np.exp(x)
        _check_finite(out, "exp overflow")
        return out
    left = evaluate(e.left, env, n)
    right = evaluate(e.right, env, n)
    if e.op == "/":
        bad = right == 0
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DomainError("division by zero", row)
    with np.errstate(over="ignore", invalid="ignore"):
        out = BINARY[e.op](left, right)
    _check_finite(out, "non-finite result")
    return out


def _check_finite(x: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(x)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise DomainError(what, row)


def parse_call(text: str) -> tuple[str, list[str]]:
    """Split ``name(arg, arg)`` into its name and raw argument strings."""
    try:
        tree = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    if not (isinstance(tree, ast.Call) and isinstance(tree.func, ast.Name)) or tree.keywords:
        raise ExpressionError(f"expected name(args...) in {text!r}")
    return tree.func.id, [ast.unparse(a) for a in tree.args]
