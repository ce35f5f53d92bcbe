"""Declarative model definition: every piece of a problem as immutable data."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

from ..formula import ExprNode, format_expr, parse_formula, parse_latex
from ..networks import NetworkSpec
from ..optimizers import OptimizerConfig

COMPARATORS = ("<=", ">=", "<", ">")
ROLES = ("agent", "endogenous_variable")


class ModelBuildError(ValueError):
    """A model definition that cannot be assembled (names, ordering, orders)."""


@dataclass(frozen=True)
class Formula:
    """A parsed formula; equality compares trees, not source text."""

    ast: ExprNode
    text: str = field(default="", compare=False)
    latex: bool = field(default=False, compare=False)

    @classmethod
    def parse(cls, text: str, latex: bool = False, name_map: Mapping[str, str] | None = None) -> "Formula":
        text = str(text)
        ast = parse_latex(text, name_map) if latex else parse_formula(text)
        return cls(ast, text, latex)

    @property
    def source(self) -> str:
        return self.text or format_expr(self.ast)


@dataclass(frozen=True)
class StateVariableDef:
    name: str
    low: float = -1.0
    high: float = 1.0
    sampling: str = "uniform"
    grid_points: int | None = None

    def __post_init__(self):
        if not self.low < self.high:
            raise ModelBuildError(f"state {self.name!r}: low must be < high, got [{self.low}, {self.high}]")
        if self.sampling not in ("uniform", "grid"):
            raise ModelBuildError(f"state {self.name!r}: sampling must be 'uniform' or 'grid'")
        if self.sampling == "grid" and (self.grid_points is None or self.grid_points < 1):
            raise ModelBuildError(f"state {self.name!r}: grid sampling needs grid_points >= 1")


@dataclass(frozen=True)
class ParameterDef:
    name: str
    value: float


@dataclass(frozen=True)
class LearnableDef:
    name: str
    spec: NetworkSpec
    role: str = "endogenous_variable"
    order: int = 2

    def __post_init__(self):
        if self.role not in ROLES:
            raise ModelBuildError(f"learnable {self.name!r}: role must be one of {ROLES}")
        if self.order < 1:
            raise ModelBuildError(f"learnable {self.name!r}: derivative order must be >= 1")


@dataclass(frozen=True)
class EquationDef:
    lhs: str
    rhs: Formula
    lhs_text: str = field(default="", compare=False)


@dataclass(frozen=True)
class ConstraintDef:
    lhs: Formula
    comparator: str
    rhs: Formula
    label: str = ""
    weight: float = 1.0

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise ModelBuildError(f"comparator must be one of {COMPARATORS}, got {self.comparator!r}")


@dataclass(frozen=True)
class EndogenousEquationDef:
    lhs: Formula
    rhs: Formula
    label: str = ""
    weight: float = 1.0


@dataclass(frozen=True)
class HJBEquationDef:
    expr: Formula
    label: str = ""
    weight: float = 1.0


@dataclass(frozen=True)
class ConditionDef:
    """Residual ``lhs - rhs`` enforced on a point set.

    Either ``points`` lists explicit state-space points, or ``fixed`` pins
    some coordinates (each to one of several values) while the remaining
    coordinates are sampled uniformly, ``count`` points per epoch.
    """

    lhs: Formula
    rhs: Formula
    label: str = ""
    weight: float = 1.0
    points: tuple[tuple[float, ...], ...] | None = None
    fixed: tuple[tuple[str, tuple[float, ...]], ...] | None = None
    count: int = 100

    def __post_init__(self):
        if (self.points is None) == (self.fixed is None):
            raise ModelBuildError(f"condition {self.label!r}: give exactly one of points or fixed")
        if self.points is not None and not self.points:
            raise ModelBuildError(f"condition {self.label!r}: empty point set")
        if self.count < 1:
            raise ModelBuildError(f"condition {self.label!r}: count must be >= 1")


@dataclass(frozen=True)
class SystemDef:
    constraints: tuple[ConstraintDef, ...]
    endogenous: tuple[EndogenousEquationDef, ...]
    equations: tuple[EquationDef, ...] = ()
    label: str = ""
    weight: float = 1.0

    def __post_init__(self):
        if not self.constraints:
            raise ModelBuildError(f"system {self.label!r}: needs at least one activation constraint")
        if not self.endogenous:
            raise ModelBuildError(f"system {self.label!r}: needs at least one endogenous equation")


@dataclass(frozen=True)
class Piece:
    """One branch of a piecewise expression; ``when=None`` is the fallback."""

    value: Formula
    when: ConstraintDef | None = None


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 1000
    batch_size: int = 100
    seed: int = 0
    optimizer: OptimizerConfig = OptimizerConfig()
    paper_epochs: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ModelBuildError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ModelBuildError("epochs must be >= 0")


@dataclass(frozen=True)
class PretrainDef:
    variable: str
    guess: tuple[Piece, ...]
    epochs: int = 6000
    batch_size: int = 100
    optimizer: OptimizerConfig = OptimizerConfig()


@dataclass(frozen=True)
class CheckDef:
    """A named property of the trained solution, measured on the eval grid."""

    name: str
    kind: str
    expr: Formula | None = None
    low: float | None = None
    high: float | None = None
    threshold: float | None = None
    bound: float | None = None
    at: tuple[tuple[str, float], ...] | None = None
    where: tuple[tuple[str, float, float], ...] | None = None


@dataclass(frozen=True)
class OracleDef:
    closed_form: tuple[tuple[str, tuple[Piece, ...]], ...] = ()
    checks: tuple[CheckDef, ...] = ()
    eval_grid: tuple[int, ...] = ()


@dataclass(frozen=True)
class ModelDefinition:
    name: str
    states: tuple[StateVariableDef, ...]
    learnables: tuple[LearnableDef, ...]
    params: tuple[ParameterDef, ...] = ()
    equations: tuple[EquationDef, ...] = ()
    conditions: tuple[ConditionDef, ...] = ()
    endogenous: tuple[EndogenousEquationDef, ...] = ()
    hjb: tuple[HJBEquationDef, ...] = ()
    constraints: tuple[ConstraintDef, ...] = ()
    systems: tuple[SystemDef, ...] = ()
    training: TrainingConfig = TrainingConfig()
    pretrain: tuple[PretrainDef, ...] = ()
    oracle: OracleDef = OracleDef()
    description: str = ""
    name_map: tuple[tuple[str, str], ...] = ()

    @property
    def state_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.states)

    @property
    def loss_labels(self) -> list[str]:
        return [
            item.label
            for group in (self.conditions, self.constraints, self.endogenous, self.hjb, self.systems)
            for item in group
        ]
