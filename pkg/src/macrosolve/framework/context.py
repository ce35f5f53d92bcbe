"""Batches of state points and the lazily evaluated variable context."""

from __future__ import annotations

import itertools
from collections.abc import Callable, Iterator, Mapping, Sequence

import torch

from ..autodiff import DerivativeCache
from ..formula import evaluate
from .model import EquationDef, StateVariableDef

Resolver = Callable[[], torch.Tensor]


def sample_batch(states: Sequence[StateVariableDef], batch_size: int, generator: torch.Generator) -> torch.Tensor:
    """Uniform i.i.d. draws per state column, or the full tensor grid.

    If any state uses grid sampling, every state is gridded (points per
    dimension from ``grid_points``) and ``batch_size`` is ignored.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if any(s.sampling == "grid" for s in states):
        return grid_points(states, [s.grid_points or batch_size for s in states])
    u = torch.rand(batch_size, len(states), generator=generator, dtype=torch.float64)
    low = torch.tensor([s.low for s in states], dtype=torch.float64)
    high = torch.tensor([s.high for s in states], dtype=torch.float64)
    return low + (high - low) * u


def grid_points(states: Sequence[StateVariableDef], counts: Sequence[int]) -> torch.Tensor:
    """Equispaced tensor grid; rows in lexicographic order of grid indices."""
    if len(counts) != len(states):
        raise ValueError(f"need one grid count per state variable ({len(states)}), got {len(counts)}")
    axes = [
        torch.linspace(s.low, s.high, n, dtype=torch.float64) if n > 1 else torch.tensor([s.low], dtype=torch.float64)
        for s, n in zip(states, counts)
    ]
    rows = list(itertools.product(*[a.tolist() for a in axes]))
    return torch.tensor(rows, dtype=torch.float64).reshape(len(rows), len(states))


class Context(Mapping):
    """Name -> batched tensor map whose entries are computed on first access.

    The key set is fixed at construction; values are cached, so every name
    is evaluated at most once per batch. ``child`` layers extra equations on
    top without touching the parent (used for system-local equations).
    """

    def __init__(self, batch_size: int, resolvers: dict[str, Resolver], parent: "Context | None" = None):
        self.batch_size = batch_size
        self._resolvers = resolvers
        self._parent = parent
        self._cache: dict[str, torch.Tensor] = {}

    def __getitem__(self, name: str) -> torch.Tensor:
        if name in self._cache:
            return self._cache[name]
        if name in self._resolvers:
            value = self._resolvers[name]()
            self._cache[name] = value
            return value
        if self._parent is not None:
            return self._parent[name]
        raise KeyError(name)

    def __contains__(self, name: object) -> bool:
        return name in self._resolvers or (self._parent is not None and name in self._parent)

    def __iter__(self) -> Iterator[str]:
        seen = set(self._resolvers)
        yield from self._resolvers
        if self._parent is not None:
            yield from (k for k in self._parent if k not in seen)

    def __len__(self) -> int:
        return sum(1 for _ in self)

    def evaluate(self, formula) -> torch.Tensor:
        ast = getattr(formula, "ast", formula)
        return evaluate(ast, self, self.batch_size)

    def child(self, equations: Sequence[EquationDef]) -> "Context":
        ctx = Context(self.batch_size, {}, parent=self)
        for eq in equations:
            ctx._resolvers[eq.lhs] = _equation_resolver(ctx, eq)
        return ctx


def _equation_resolver(ctx: Context, eq: EquationDef) -> Resolver:
    return lambda: ctx.evaluate(eq.rhs)


def build_context(
    X: torch.Tensor,
    state_names: Sequence[str],
    params: Mapping[str, float],
    networks: Mapping[str, tuple[Callable[[torch.Tensor], torch.Tensor], int]],
    equations: Sequence[EquationDef] = (),
) -> Context:
    """Context over the batch ``X``.

    Holds state columns, broadcast parameters, every learnable variable with
    all of its input derivatives up to its order, then the equation-defined
    variables. ``networks`` maps a name to ``(function of X, order)``.
    """
    if not X.requires_grad:
        X = X.detach().requires_grad_(True)
    batch = X.shape[0]
    resolvers: dict[str, Resolver] = {}
    for i, name in enumerate(state_names):
        resolvers[name] = (lambda i=i: X[:, i])
    for name, value in params.items():
        resolvers[name] = (lambda v=value: torch.full((batch,), float(v), dtype=torch.float64))
    for name, (fn, order) in networks.items():
        cache = DerivativeCache(fn, X, state_names, order, name)
        for key in cache.keys:
            resolvers[key] = (lambda cache=cache, key=key: cache[key])
    ctx = Context(batch, resolvers)
    ctx.X = X
    for eq in equations:
        resolvers[eq.lhs] = _equation_resolver(ctx, eq)
    return ctx
