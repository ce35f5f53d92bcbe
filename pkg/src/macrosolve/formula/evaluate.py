"""Evaluate expression trees against a context of batched tensors."""

from __future__ import annotations

from collections.abc import Mapping

import torch

from .ast import Binary, Constant, ExprNode, Unary, Variable


class UnknownVariableError(KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown variable {name!r}")

    def __str__(self) -> str:
        return self.args[0]


_UNARY = {
    "neg": torch.neg,
    "log": torch.log,
    "exp": torch.exp,
    "sin": torch.sin,
    "cos": torch.cos,
    "sqrt": torch.sqrt,
    "tanh": torch.tanh,
    "abs": torch.abs,
    "sigmoid": torch.sigmoid,
}


def _eval(node: ExprNode, ctx: Mapping) -> torch.Tensor | float:
    if isinstance(node, Constant):
        return node.value
    if isinstance(node, Variable):
        try:
            return ctx[node.name]
        except KeyError:
            raise UnknownVariableError(node.name) from None
    if isinstance(node, Unary):
        child = _eval(node.child, ctx)
        if not isinstance(child, torch.Tensor):
            child = torch.tensor(child, dtype=torch.float64)
        return _UNARY[node.op](child)
    left = _eval(node.left, ctx)
    right = _eval(node.right, ctx)
    op = node.op
    if op == "add":
        return left + right
    if op == "sub":
        return left - right
    if op == "mul":
        return left * right
    if op == "div":
        if not isinstance(left, torch.Tensor) and not isinstance(right, torch.Tensor):
            # python floats raise on x/0; keep IEEE semantics
            return torch.tensor(left, dtype=torch.float64) / right
        return left / right
    if not isinstance(left, torch.Tensor):
        left = torch.tensor(left, dtype=torch.float64)
    return torch.pow(left, right)


def evaluate(expr: ExprNode, ctx: Mapping, batch_size: int | None = None) -> torch.Tensor:
    """Evaluate ``expr`` elementwise over the tensors in ``ctx``.

    Non-finite results propagate as NaN/Inf rather than raising. A result
    that depends on no batched value is broadcast to ``batch_size`` when given.
    """
    out = _eval(expr, ctx)
    if not isinstance(out, torch.Tensor):
        out = torch.tensor(out, dtype=torch.float64)
    if batch_size is not None and out.dim() == 0:
        out = out.expand(batch_size)
    return out
