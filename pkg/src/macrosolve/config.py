"""The JSON model-config format: schema, import to a ModelDefinition, export.

A config is one JSON object. Formulas are strings; an entry carrying
``"latex": true`` has its formulas read as LaTeX. Unknown keys anywhere are
rejected. See ``docs/config.md`` for the schema.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .formula import FormulaError, Variable, format_expr
from .framework.model import (
    CheckDef,
    ConditionDef,
    ConstraintDef,
    EndogenousEquationDef,
    EquationDef,
    Formula,
    HJBEquationDef,
    LearnableDef,
    ModelBuildError,
    ModelDefinition,
    OracleDef,
    ParameterDef,
    Piece,
    PretrainDef,
    StateVariableDef,
    SystemDef,
    TrainingConfig,
)
from .networks import NetworkSpec
from .optimizers import OptimizerConfig

CHECK_KINDS = (
    "nondecreasing",
    "crossing",
    "value_range",
    "max_abs",
    "rms",
    "argmax_in",
    "positive",
    "finite_losses",
    "final_loss_le",
)


class ConfigError(ValueError):
    """A config document that fails schema validation or formula parsing."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class StateDoc(_Strict):
    name: str
    low: float = -1.0
    high: float = 1.0
    sampling: Literal["uniform", "grid"] = "uniform"
    grid_points: int | None = None


class LearnableDoc(_Strict):
    name: str
    role: Literal["agent", "endogenous_variable"] = "endogenous_variable"
    kind: Literal["mlp", "kan"] = "mlp"
    hidden_sizes: list[int] = [30, 30, 30, 30]
    activation: Literal["tanh", "sigmoid", "relu", "silu"] = "tanh"
    output_transform: Literal["none", "softplus", "exp"] = "none"
    order: int = 2
    grid_size: int = 5
    spline_order: int = 3
    grid_range: tuple[float, float] = (-1.0, 1.0)
    init: Literal["xavier", "fan_in"] = "xavier"


class EquationDoc(_Strict):
    lhs: str
    rhs: str
    latex: bool = False


class ConstraintDoc(_Strict):
    lhs: str
    comparator: Literal["<=", ">=", "<", ">"]
    rhs: str
    label: str | None = None
    weight: float = 1.0
    latex: bool = False


class EndogenousDoc(_Strict):
    lhs: str
    rhs: str = "0"
    label: str | None = None
    weight: float = 1.0
    latex: bool = False


class HJBDoc(_Strict):
    expr: str
    label: str | None = None
    weight: float = 1.0
    latex: bool = False


class ConditionDoc(_Strict):
    lhs: str
    rhs: str
    label: str | None = None
    weight: float = 1.0
    points: list[list[float]] | None = None
    fixed: dict[str, list[float]] | None = None
    count: int = 100
    latex: bool = False


class SystemDoc(_Strict):
    label: str | None = None
    weight: float = 1.0
    constraints: list[ConstraintDoc]
    equations: list[EquationDoc] = []
    endogenous: list[EndogenousDoc]


class OptimizerDoc(_Strict):
    kind: Literal["adam", "adamw", "lbfgs"] = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    history_size: int = 10
    max_line_search_steps: int = 25
    tolerance_grad: float = 1e-12
    max_iter: int = 1


class TrainingDoc(_Strict):
    epochs: int = 1000
    batch_size: int = 100
    seed: int = 0
    optimizer: OptimizerDoc = OptimizerDoc()
    paper_epochs: int | None = None


class WhenDoc(_Strict):
    lhs: str
    comparator: Literal["<=", ">=", "<", ">"]
    rhs: str


class PieceDoc(_Strict):
    value: str
    when: WhenDoc | None = None


class PretrainDoc(_Strict):
    variable: str
    guess: list[PieceDoc]
    epochs: int = 6000
    batch_size: int = 100
    optimizer: OptimizerDoc = OptimizerDoc()


class CheckDoc(_Strict):
    name: str
    kind: Literal[CHECK_KINDS]  # type: ignore[valid-type]
    expr: str | None = None
    latex: bool = False
    low: float | None = None
    high: float | None = None
    threshold: float | None = None
    bound: float | None = None
    at: dict[str, float] | None = None
    where: dict[str, tuple[float, float]] | None = None


class OracleDoc(_Strict):
    closed_form: dict[str, Union[str, list[PieceDoc]]] = {}
    checks: list[CheckDoc] = []
    eval_grid: list[int] = []


class ConfigDocument(_Strict):
    name: str
    description: str = ""
    name_map: dict[str, str] = {}
    state: list[StateDoc] = Field(min_length=1)
    params: dict[str, float] = {}
    learnable: list[LearnableDoc] = Field(min_length=1)
    equations: list[EquationDoc] = []
    conditions: list[ConditionDoc] = []
    endogenous: list[EndogenousDoc] = []
    hjb: list[HJBDoc] = []
    constraints: list[ConstraintDoc] = []
    systems: list[SystemDoc] = []
    training: TrainingDoc = TrainingDoc()
    pretrain: list[PretrainDoc] = []
    oracle: OracleDoc = OracleDoc()


def _format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "invalid config: " + "; ".join(lines)


class _Builder:
    def __init__(self, doc: ConfigDocument):
        self.doc = doc
        self.name_map = dict(doc.name_map)

    def formula(self, text: str, latex: bool, where: str) -> Formula:
        try:
            return Formula.parse(text, latex, self.name_map)
        except FormulaError as exc:
            raise ConfigError(f"{where}: {exc}") from exc

    def lhs_name(self, text: str, latex: bool, where: str) -> str:
        f = self.formula(text, latex, where)
        if not isinstance(f.ast, Variable):
            raise ConfigError(f"{where}: left-hand side {text!r} must be a single variable name")
        return f.ast.name

    def equation(self, e: EquationDoc, where: str) -> EquationDef:
        return EquationDef(self.lhs_name(e.lhs, e.latex, where), self.formula(e.rhs, e.latex, where), e.lhs)

    def constraint(self, c: ConstraintDoc | WhenDoc, where: str, label: str = "", weight: float = 1.0, latex: bool = False) -> ConstraintDef:
        return ConstraintDef(
            self.formula(c.lhs, latex, where), c.comparator, self.formula(c.rhs, latex, where), label, weight
        )

    def endogenous(self, e: EndogenousDoc, label: str, where: str) -> EndogenousEquationDef:
        return EndogenousEquationDef(self.formula(e.lhs, e.latex, where), self.formula(e.rhs, e.latex, where), label, e.weight)

    def pieces(self, pieces: list[PieceDoc], where: str) -> tuple[Piece, ...]:
        return tuple(
            Piece(self.formula(p.value, False, where), None if p.when is None else self.constraint(p.when, where))
            for p in pieces
        )


def _optimizer(o: OptimizerDoc) -> OptimizerConfig:
    return OptimizerConfig(**o.model_dump())


def build_model(doc: ConfigDocument) -> ModelDefinition:
    """Convert a validated document into a ModelDefinition (no name checks)."""
    b = _Builder(doc)
    states = tuple(StateVariableDef(s.name, s.low, s.high, s.sampling, s.grid_points) for s in doc.state)
    state_names = tuple(s.name for s in doc.state)
    learnables = tuple(
        LearnableDef(
            lv.name,
            NetworkSpec(
                state_names,
                lv.kind,
                tuple(lv.hidden_sizes),
                lv.activation,
                lv.output_transform,
                lv.grid_size,
                lv.spline_order,
                tuple(lv.grid_range),
                lv.init,
            ),
            lv.role,
            lv.order,
        )
        for lv in doc.learnable
    )
    params = tuple(ParameterDef(k, v) for k, v in doc.params.items())
    equations = tuple(b.equation(e, f"equations[{i}]") for i, e in enumerate(doc.equations))
    conditions = []
    for i, c in enumerate(doc.conditions):
        where = f"conditions[{i}]"
        conditions.append(
            ConditionDef(
                b.formula(c.lhs, c.latex, where),
                b.formula(c.rhs, c.latex, where),
                c.label or f"condition_{i + 1}",
                c.weight,
                None if c.points is None else tuple(tuple(p) for p in c.points),
                None if c.fixed is None else tuple((k, tuple(v)) for k, v in c.fixed.items()),
                c.count,
            )
        )
    endogenous = tuple(
        b.endogenous(e, e.label or f"endogenous_{i + 1}", f"endogenous[{i}]") for i, e in enumerate(doc.endogenous)
    )
    hjb = tuple(
        HJBEquationDef(b.formula(h.expr, h.latex, f"hjb[{i}]"), h.label or f"hjb_{i + 1}", h.weight)
        for i, h in enumerate(doc.hjb)
    )
    constraints = tuple(
        b.constraint(c, f"constraints[{i}]", c.label or f"constraint_{i + 1}", c.weight, c.latex)
        for i, c in enumerate(doc.constraints)
    )
    systems = []
    for i, s in enumerate(doc.systems):
        where = f"systems[{i}]"
        systems.append(
            SystemDef(
                tuple(
                    b.constraint(c, f"{where}.constraints[{j}]", c.label or "", c.weight, c.latex)
                    for j, c in enumerate(s.constraints)
                ),
                tuple(
                    b.endogenous(e, e.label or f"endogenous_{j + 1}", f"{where}.endogenous[{j}]")
                    for j, e in enumerate(s.endogenous)
                ),
                tuple(b.equation(e, f"{where}.equations[{j}]") for j, e in enumerate(s.equations)),
                s.label or f"system_{i + 1}",
                s.weight,
            )
        )
    t = doc.training
    training = TrainingConfig(t.epochs, t.batch_size, t.seed, _optimizer(t.optimizer), t.paper_epochs)
    pretrain = tuple(
        PretrainDef(p.variable, b.pieces(p.guess, f"pretrain[{i}].guess"), p.epochs, p.batch_size, _optimizer(p.optimizer))
        for i, p in enumerate(doc.pretrain)
    )
    closed = []
    for name, value in doc.oracle.closed_form.items():
        pieces = [PieceDoc(value=value)] if isinstance(value, str) else value
        closed.append((name, b.pieces(pieces, f"oracle.closed_form.{name}")))
    checks = tuple(
        CheckDef(
            c.name,
            c.kind,
            None if c.expr is None else b.formula(c.expr, c.latex, f"oracle.checks[{i}]"),
            c.low,
            c.high,
            c.threshold,
            c.bound,
            None if c.at is None else tuple(c.at.items()),
            None if c.where is None else tuple((k, lo, hi) for k, (lo, hi) in c.where.items()),
        )
        for i, c in enumerate(doc.oracle.checks)
    )
    oracle = OracleDef(tuple(closed), checks, tuple(doc.oracle.eval_grid))
    return ModelDefinition(
        doc.name,
        states,
        learnables,
        params,
        equations,
        tuple(conditions),
        endogenous,
        hjb,
        constraints,
        tuple(systems),
        training,
        pretrain,
        oracle,
        doc.description,
        tuple(doc.name_map.items()),
    )


def parse_config(data: Mapping[str, Any]) -> ModelDefinition:
    try:
        doc = ConfigDocument.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc)) from exc
    try:
        return build_model(doc)
    except (ModelBuildError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ModelDefinition:
    """Read and schema-validate a config file. Raises ConfigError."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(data)


# -- export ---------------------------------------------------------------

def _text(f: Formula) -> str:
    return f.text if f.text else format_expr(f.ast)


def _latex_flag(*formulas: Formula) -> dict:
    return {"latex": True} if any(f.latex for f in formulas) else {}


def _check_same_mode(where: str, *formulas: Formula) -> None:
    if len({f.latex for f in formulas}) > 1:
        raise ValueError(f"{where}: cannot export an entry mixing LaTeX and plain formulas")


def _constraint_doc(c: ConstraintDef, with_meta: bool = True) -> dict:
    _check_same_mode("constraint", c.lhs, c.rhs)
    d = {"lhs": _text(c.lhs), "comparator": c.comparator, "rhs": _text(c.rhs)}
    if with_meta:
        d.update(label=c.label, weight=c.weight, **_latex_flag(c.lhs, c.rhs))
    return d


def _pieces_doc(pieces: tuple[Piece, ...]) -> list[dict]:
    out = []
    for p in pieces:
        d: dict = {"value": _text(p.value)}
        if p.when is not None:
            d["when"] = _constraint_doc(p.when, with_meta=False)
        out.append(d)
    return out


def _optimizer_doc(o: OptimizerConfig) -> dict:
    return {k: getattr(o, k) for k in OptimizerDoc.model_fields}


def _equation_doc(e: EquationDef) -> dict:
    if e.rhs.latex:
        return {"lhs": e.lhs_text or e.lhs, "rhs": _text(e.rhs), "latex": True}
    return {"lhs": e.lhs, "rhs": _text(e.rhs)}


def _endogenous_doc(e: EndogenousEquationDef) -> dict:
    _check_same_mode(e.label, e.lhs, e.rhs)
    return {"lhs": _text(e.lhs), "rhs": _text(e.rhs), "label": e.label, "weight": e.weight, **_latex_flag(e.lhs, e.rhs)}


def export_config(model: ModelDefinition) -> dict:
    """The config document for ``model``; ``parse_config`` inverts it."""
    doc: dict[str, Any] = {"name": model.name}
    if model.description:
        doc["description"] = model.description
    if model.name_map:
        doc["name_map"] = dict(model.name_map)
    doc["state"] = []
    for s in model.states:
        d = {"name": s.name, "low": s.low, "high": s.high, "sampling": s.sampling}
        if s.grid_points is not None:
            d["grid_points"] = s.grid_points
        doc["state"].append(d)
    doc["params"] = {p.name: p.value for p in model.params}
    doc["learnable"] = []
    for lv in model.learnables:
        sp = lv.spec
        d = {
            "name": lv.name,
            "role": lv.role,
            "kind": sp.kind,
            "hidden_sizes": list(sp.hidden_sizes),
            "activation": sp.activation,
            "output_transform": sp.output_transform,
            "order": lv.order,
        }
        if sp.init != "xavier":
            d["init"] = sp.init
        if sp.kind == "kan":
            d.update(grid_size=sp.grid_size, spline_order=sp.spline_order, grid_range=list(sp.grid_range))
        doc["learnable"].append(d)
    doc["equations"] = [_equation_doc(e) for e in model.equations]
    doc["conditions"] = []
    for c in model.conditions:
        _check_same_mode(c.label, c.lhs, c.rhs)
        d = {"lhs": _text(c.lhs), "rhs": _text(c.rhs), "label": c.label, "weight": c.weight}
        if c.points is not None:
            d["points"] = [list(p) for p in c.points]
        else:
            d["fixed"] = {k: list(v) for k, v in c.fixed}
            d["count"] = c.count
        d.update(_latex_flag(c.lhs, c.rhs))
        doc["conditions"].append(d)
    doc["endogenous"] = [_endogenous_doc(e) for e in model.endogenous]
    doc["hjb"] = [{"expr": _text(h.expr), "label": h.label, "weight": h.weight, **_latex_flag(h.expr)} for h in model.hjb]
    doc["constraints"] = [_constraint_doc(c) for c in model.constraints]
    doc["systems"] = [
        {
            "label": s.label,
            "weight": s.weight,
            "constraints": [_constraint_doc(c) for c in s.constraints],
            "equations": [_equation_doc(e) for e in s.equations],
            "endogenous": [_endogenous_doc(e) for e in s.endogenous],
        }
        for s in model.systems
    ]
    t = model.training
    doc["training"] = {
        "epochs": t.epochs,
        "batch_size": t.batch_size,
        "seed": t.seed,
        "optimizer": _optimizer_doc(t.optimizer),
    }
    if t.paper_epochs is not None:
        doc["training"]["paper_epochs"] = t.paper_epochs
    doc["pretrain"] = [
        {
            "variable": p.variable,
            "guess": _pieces_doc(p.guess),
            "epochs": p.epochs,
            "batch_size": p.batch_size,
            "optimizer": _optimizer_doc(p.optimizer),
        }
        for p in model.pretrain
    ]
    checks = []
    for c in model.oracle.checks:
        d: dict[str, Any] = {"name": c.name, "kind": c.kind}
        if c.expr is not None:
            d["expr"] = _text(c.expr)
            d.update(_latex_flag(c.expr))
        for key in ("low", "high", "threshold", "bound"):
            if getattr(c, key) is not None:
                d[key] = getattr(c, key)
        if c.at is not None:
            d["at"] = dict(c.at)
        if c.where is not None:
            d["where"] = {k: [lo, hi] for k, lo, hi in c.where}
        checks.append(d)
    doc["oracle"] = {
        "closed_form": {name: _pieces_doc(pieces) for name, pieces in model.oracle.closed_form},
        "checks": checks,
        "eval_grid": list(model.oracle.eval_grid),
    }
    return doc


def dump_config(model: ModelDefinition) -> str:
    return json.dumps(export_config(model), indent=2) + "\n"
