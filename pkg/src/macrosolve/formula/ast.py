"""Expression tree for parsed formulas."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

UNARY_OPS = ("neg", "log", "exp", "sin", "cos", "sqrt", "tanh", "abs", "sigmoid")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")
FUNCTIONS = tuple(op for op in UNARY_OPS if op != "neg")


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    child: "ExprNode"

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ValueError(f"unknown unary op {self.op!r}")


@dataclass(frozen=True)
class Binary:
    op: str
    left: "ExprNode"
    right: "ExprNode"

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {self.op!r}")


ExprNode = Union[Constant, Variable, Unary, Binary]

_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
# binding strength used by the formatter; mirrors the parser's grammar levels
_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_ATOM = 5


def _prec(node: ExprNode) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary) and node.op == "neg":
        return _PREC["neg"]
    return _ATOM


def _wrap(node: ExprNode, needs_parens: bool) -> str:
    text = format_expr(node)
    return f"({text})" if needs_parens else text


def format_expr(node: ExprNode) -> str:
    """Render a tree as a raw formula string that parses back to the same tree."""
    if isinstance(node, Constant):
        return repr(float(node.value))
    if isinstance(node, Variable):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            return "-" + _wrap(node.child, _prec(node.child) < _PREC["neg"])
        return f"{node.op}({format_expr(node.child)})"
    p = _PREC[node.op]
    if node.op == "pow":
        left = _wrap(node.left, _prec(node.left) <= p)
        right = _wrap(node.right, _prec(node.right) < _PREC["neg"])
        return f"{left}^{right}"
    left = _wrap(node.left, _prec(node.left) < p)
    right = _wrap(node.right, _prec(node.right) <= p)
    return f"{left} {_SYMBOL[node.op]} {right}"


def variables(node: ExprNode) -> set[str]:
    """Names referenced anywhere in the tree."""
    if isinstance(node, Variable):
        return {node.name}
    if isinstance(node, Unary):
        return variables(node.child)
    if isinstance(node, Binary):
        return variables(node.left) | variables(node.right)
    return set()
