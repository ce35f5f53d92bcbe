"""Input derivatives of learnable functions and parameter gradients.

Batched values are 1-D float64 torch tensors. Derivative maps follow the
dynamic-programming construction: every order-k entry is the first
derivative of an order-(k-1) entry, keyed by appending the state name, so
``f_x1x2`` is d/dx2 of ``f_x1``.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from itertools import product

import torch

logger = logging.getLogger(__name__)

Function = Callable[[torch.Tensor], torch.Tensor]


def derivative_keys(name: str, state_names: Sequence[str], order: int) -> dict[str, tuple[int, ...]]:
    """Map every derivative name up to ``order`` to its differentiation path.

    The path lists state indices in the order they are applied. The base
    function is keyed by ``name`` with an empty path.
    """
    if order < 1:
        raise ValueError(f"derivative order must be >= 1, got {order}")
    if not state_names:
        raise ValueError("at least one state variable is required")
    keys: dict[str, tuple[int, ...]] = {name: ()}
    for k in range(1, order + 1):
        for path in product(range(len(state_names)), repeat=k):
            key = f"{name}_" + "".join(state_names[i] for i in path)
            if key in keys:
                raise ValueError(
                    f"derivative name {key!r} is ambiguous for state names {list(state_names)}"
                )
            keys[key] = path
    return keys


def input_gradient(y: torch.Tensor, X: torch.Tensor) -> torch.Tensor:
    """d y_b / d X_b for every row b, shape (B, d); keeps the graph for reuse.

    Relies on row b of ``y`` depending only on row b of ``X``.
    """
    if not y.requires_grad:
        return torch.zeros_like(X)
    (g,) = torch.autograd.grad(y.sum(), X, create_graph=True, allow_unused=True)
    if g is None:
        return torch.zeros_like(X)
    return g


def _first_derivative(prev: Function, i: int) -> Function:
    def derivative(X: torch.Tensor) -> torch.Tensor:
        if not X.requires_grad:
            X = X.detach().requires_grad_(True)
        return input_gradient(prev(X), X)[:, i]

    return derivative


def build_derivative_map(
    f: Function, state_names: Sequence[str], order: int = 2, name: str = "f"
) -> dict[str, Function]:
    """Callables for ``f`` and all of its input derivatives up to ``order``.

    For d state variables the map holds 1 + d + d^2 + ... + d^order entries;
    mixed partials appear under both orderings.
    """
    keys = derivative_keys(name, state_names, order)
    levels: list[dict[str, Function]] = [{name: f}]
    for _ in range(order):
        level = {}
        for i, state in enumerate(state_names):
            for prev_key, prev in levels[-1].items():
                level[f"{prev_key}{'' if prev_key != name else '_'}{state}"] = _first_derivative(prev, i)
        levels.append(level)
    out = {k: fn for level in levels for k, fn in level.items()}
    assert out.keys() == keys.keys()
    return out


class DerivativeCache:
    """Lazily evaluated derivatives of one function at one batch ``X``.

    Each gradient call yields all d partials of an entry at once, so the
    cache stores whole gradients per differentiation prefix.
    """

    def __init__(self, f: Function, X: torch.Tensor, state_names: Sequence[str], order: int, name: str):
        if not X.requires_grad:
            raise ValueError("X must require grad to take input derivatives")
        self.X = X
        self.keys = derivative_keys(name, state_names, order)
        self._f = f
        self._values: dict[tuple[int, ...], torch.Tensor] = {}
        self._grads: dict[tuple[int, ...], torch.Tensor] = {}

    def value(self, path: tuple[int, ...]) -> torch.Tensor:
        if path not in self._values:
            if not path:
                self._values[path] = self._f(self.X)
            else:
                prefix = path[:-1]
                if prefix not in self._grads:
                    self._grads[prefix] = input_gradient(self.value(prefix), self.X)
                self._values[path] = self._grads[prefix][:, path[-1]]
        return self._values[path]

    def __getitem__(self, key: str) -> torch.Tensor:
        return self.value(self.keys[key])

    def __contains__(self, key: object) -> bool:
        return key in self.keys


def grad_wrt_params(loss: torch.Tensor, params: torch.Tensor) -> tuple[torch.Tensor, bool]:
    """Reverse-mode gradient of a scalar loss with respect to ``params``.

    Returns ``(gradient, detached)``. A loss that does not depend on
    ``params`` yields a zero gradient and ``detached=True``.
    """
    if not loss.requires_grad:
        logger.debug("loss is detached from the parameters; gradient is zero")
        return torch.zeros_like(params), True
    (g,) = torch.autograd.grad(loss, params, allow_unused=True)
    if g is None:
        return torch.zeros_like(params), True
    return g, False


def detach(v: torch.Tensor) -> torch.Tensor:
    return v.detach()
