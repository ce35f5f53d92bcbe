"""Build-time checks: name resolution, equation order, derivative orders."""

from __future__ import annotations

from collections.abc import Iterable

from ..autodiff import derivative_keys
from ..formula import variables
from .model import ConstraintDef, Formula, ModelBuildError, ModelDefinition, Piece


def derivative_path(rest: str, state_names: tuple[str, ...]) -> list[str] | None:
    """Split ``rest`` into a sequence of state names, or None if impossible."""
    if not rest:
        return []
    for s in sorted(state_names, key=len, reverse=True):
        if rest.startswith(s):
            tail = derivative_path(rest[len(s):], state_names)
            if tail is not None:
                return [s, *tail]
    return None


def _describe_unknown(name: str, model: ModelDefinition, later: dict[str, int]) -> str:
    if name in later:
        return (
            f"refers to {name!r}, which is only defined by equation #{later[name] + 1}; "
            "equations are evaluated in declaration order, so this is a forward or circular reference"
        )
    for learnable in model.learnables:
        prefix = learnable.name + "_"
        if name.startswith(prefix):
            path = derivative_path(name[len(prefix):], model.state_names)
            if path:
                return (
                    f"refers to {name!r}, a derivative of order {len(path)}, but learnable "
                    f"{learnable.name!r} has derivative order {learnable.order}"
                )
    return f"refers to unknown name {name!r}"


class _Scope:
    def __init__(self, model: ModelDefinition):
        self.model = model
        self.kinds: dict[str, str] = {}

    def add(self, name: str, kind: str) -> None:
        if name in self.kinds:
            raise ModelBuildError(f"name {name!r} is defined twice ({self.kinds[name]} and {kind})")
        self.kinds[name] = kind

    def check(self, where: str, formulas: Iterable[Formula | None], later: dict[str, int] | None = None) -> None:
        for f in formulas:
            if f is None:
                continue
            for name in sorted(variables(f.ast)):
                if name not in self.kinds:
                    raise ModelBuildError(f"{where} {_describe_unknown(name, self.model, later or {})}")


def _constraint_formulas(c: ConstraintDef) -> list[Formula]:
    return [c.lhs, c.rhs]


def _piece_formulas(pieces: Iterable[Piece]) -> list[Formula]:
    out = []
    for p in pieces:
        out.append(p.value)
        if p.when is not None:
            out += _constraint_formulas(p.when)
    return out


def validate_model(model: ModelDefinition) -> dict[str, str]:
    """Raise ModelBuildError on any unresolved name; return the name table."""
    if not model.states:
        raise ModelBuildError("a model needs at least one state variable")
    if not model.learnables:
        raise ModelBuildError("a model needs at least one learnable variable")
    scope = _Scope(model)
    for s in model.states:
        scope.add(s.name, "state")
    for p in model.params:
        scope.add(p.name, "parameter")
    for learnable in model.learnables:
        if tuple(learnable.spec.input_names) != model.state_names:
            raise ModelBuildError(
                f"learnable {learnable.name!r} takes inputs {list(learnable.spec.input_names)}, "
                f"expected the state variables {list(model.state_names)}"
            )
        try:
            keys = derivative_keys(learnable.name, model.state_names, learnable.order)
        except ValueError as exc:
            raise ModelBuildError(str(exc)) from exc
        for key in keys:
            scope.add(key, learnable.role if key == learnable.name else f"derivative of {learnable.name}")

    for i, eq in enumerate(model.equations):
        later = {e.lhs: j for j, e in enumerate(model.equations) if j >= i}
        scope.check(f"equation #{i + 1} ({eq.lhs})", [eq.rhs], later)
        scope.add(eq.lhs, "equation")

    for c in model.conditions:
        scope.check(f"condition {c.label!r}", [c.lhs, c.rhs])
        if c.points is not None:
            for point in c.points:
                if len(point) != len(model.states):
                    raise ModelBuildError(
                        f"condition {c.label!r}: point {list(point)} needs {len(model.states)} coordinates"
                    )
        else:
            for name, values in c.fixed:
                if name not in model.state_names:
                    raise ModelBuildError(f"condition {c.label!r}: fixes unknown state {name!r}")
                if not values:
                    raise ModelBuildError(f"condition {c.label!r}: no values given for {name!r}")
    for e in model.endogenous:
        scope.check(f"endogenous equation {e.label!r}", [e.lhs, e.rhs])
    for h in model.hjb:
        scope.check(f"HJB equation {h.label!r}", [h.expr])
    for c in model.constraints:
        scope.check(f"constraint {c.label!r}", _constraint_formulas(c))

    for system in model.systems:
        local = _Scope(model)
        local.kinds = dict(scope.kinds)
        for i, eq in enumerate(system.equations):
            later = {e.lhs: j for j, e in enumerate(system.equations) if j >= i}
            local.check(f"system {system.label!r} equation {eq.lhs!r}", [eq.rhs], later)
            local.add(eq.lhs, f"equation local to system {system.label}")
        for c in system.constraints:
            local.check(f"system {system.label!r} constraint", _constraint_formulas(c))
        for e in system.endogenous:
            local.check(f"system {system.label!r} endogenous equation {e.label!r}", [e.lhs, e.rhs])

    base = _Scope(model)
    base.kinds = {k: v for k, v in scope.kinds.items() if v in ("state", "parameter")}
    learnable_names = {lv.name for lv in model.learnables}
    for pre in model.pretrain:
        if pre.variable not in learnable_names:
            raise ModelBuildError(f"pretrain target {pre.variable!r} is not a learnable variable")
        base.check(f"pretrain guess for {pre.variable!r}", _piece_formulas(pre.guess))

    equation_names = {eq.lhs for eq in model.equations}
    for name, pieces in model.oracle.closed_form:
        if name not in learnable_names | equation_names:
            raise ModelBuildError(f"closed form given for unknown variable {name!r}")
        base.check(f"closed form for {name!r}", _piece_formulas(pieces))
    for check in model.oracle.checks:
        scope.check(f"check {check.name!r}", [check.expr])
    if model.oracle.eval_grid and len(model.oracle.eval_grid) != len(model.states):
        raise ModelBuildError(f"eval_grid needs one count per state variable ({len(model.states)})")

    labels = model.loss_labels
    if any(not label for label in labels):
        raise ModelBuildError("every loss component needs a non-empty label")
    dupes = sorted({label for label in labels if labels.count(label) > 1})
    if dupes:
        raise ModelBuildError(f"duplicate loss labels: {dupes}")
    if "total" in labels or "epoch" in labels:
        raise ModelBuildError("'total' and 'epoch' are reserved loss labels")
    return scope.kinds
