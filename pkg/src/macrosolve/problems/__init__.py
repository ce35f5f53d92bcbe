"""Built-in problems and their oracles.

Each problem ships as a JSON config in ``configs/``; the loaders below
parse those files, so the configs are the single source of truth.
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from importlib import resources

import torch

from ..config import load_config, parse_config
from ..framework import (
    CheckDef,
    CompiledModel,
    Context,
    LossReport,
    ModelDefinition,
    build_context,
    evaluate_piecewise,
    grid_points,
)

PROBLEMS = (
    "function_approx",
    "cauchy_euler",
    "cauchy_euler_kan",
    "diffusion",
    "log_utility",
    "log_utility_system",
    "econ_1d",
    "ditella",
)

DEFAULT_GRID_POINTS = 101


def list_problems() -> list[str]:
    return list(PROBLEMS)


def config_text(name: str) -> str:
    if name not in PROBLEMS:
        raise KeyError(f"unknown problem {name!r}; available: {', '.join(PROBLEMS)}")
    return resources.files(__package__).joinpath("configs", f"{name}.json").read_text()


def load_problem(name: str) -> ModelDefinition:
    return parse_config(json.loads(config_text(name)))


def problem_function_approx() -> ModelDefinition:
    return load_problem("function_approx")


def problem_cauchy_euler() -> ModelDefinition:
    return load_problem("cauchy_euler")


def problem_cauchy_euler_kan() -> ModelDefinition:
    return load_problem("cauchy_euler_kan")


def problem_diffusion() -> ModelDefinition:
    return load_problem("diffusion")


def problem_log_utility() -> ModelDefinition:
    return load_problem("log_utility")


def problem_log_utility_system() -> ModelDefinition:
    return load_problem("log_utility_system")


def problem_econ_1d() -> ModelDefinition:
    return load_problem("econ_1d")


def problem_ditella() -> ModelDefinition:
    return load_problem("ditella")


# -- oracles --------------------------------------------------------------

def eval_grid(model: ModelDefinition, counts: Sequence[int] | None = None) -> torch.Tensor:
    counts = list(counts or model.oracle.eval_grid or [DEFAULT_GRID_POINTS] * len(model.states))
    return grid_points(model.states, counts)


def closed_form_networks(model: ModelDefinition) -> dict:
    """Closed-form solutions shaped like networks, for exact-solution tests.

    Every learnable variable must have a closed form. The functions are
    differentiable in ``X``, so derivative maps work as for networks.
    """
    closed = dict(model.oracle.closed_form)
    missing = [lv.name for lv in model.learnables if lv.name not in closed]
    if missing:
        raise ValueError(f"no closed form for {missing}")
    params = {p.name: float(p.value) for p in model.params}

    def make(pieces):
        def fn(X: torch.Tensor) -> torch.Tensor:
            ctx = build_context(X, model.state_names, params, {})
            return evaluate_piecewise(pieces, ctx)

        return fn

    return {lv.name: (make(closed[lv.name]), lv.order) for lv in model.learnables}


@dataclass
class CheckResult:
    name: str
    kind: str
    passed: bool | None
    measured: float | None
    detail: str = ""


@dataclass
class OracleReport:
    errors: dict[str, dict[str, float]] = field(default_factory=dict)
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def lines(self) -> list[str]:
        out = [f"{name}: max_abs={e['max_abs']:.3e} rms={e['rms']:.3e}" for name, e in self.errors.items()]
        for c in self.checks:
            status = {True: "PASS", False: "FAIL", None: "SKIP"}[c.passed]
            value = "n/a" if c.measured is None else f"{c.measured:.6g}"
            out.append(f"{status} {c.name} ({c.kind}) measured={value} {c.detail}".rstrip())
        return out


def _select(grid: torch.Tensor, model: ModelDefinition, check: CheckDef) -> torch.Tensor:
    pts = grid.clone()
    names = list(model.state_names)
    if check.at:
        for name, value in check.at:
            pts[:, names.index(name)] = float(value)
        pts = torch.unique(pts, dim=0)
    if check.where:
        keep = torch.ones(len(pts), dtype=torch.bool)
        for name, lo, hi in check.where:
            col = pts[:, names.index(name)]
            keep &= (col >= lo) & (col <= hi)
        pts = pts[keep]
    return pts


def _run_check(
    check: CheckDef, model: ModelDefinition, context_at, grid: torch.Tensor, history: Sequence[LossReport] | None
) -> CheckResult:
    kind = check.kind
    if kind in ("finite_losses", "final_loss_le"):
        if not history:
            return CheckResult(check.name, kind, None, None, "no training history")
        if kind == "finite_losses":
            bad = sum(r.non_finite for r in history)
            return CheckResult(check.name, kind, bad == 0, float(bad), "non-finite epochs")
        final = history[-1].total
        return CheckResult(check.name, kind, final <= check.bound, final, f"bound {check.bound}")

    pts = _select(grid, model, check)
    ctx: Context = context_at(pts)
    values = ctx.evaluate(check.expr).detach()
    first = pts[:, 0]
    if kind == "nondecreasing":
        tol = check.bound or 0.0
        worst = float(torch.diff(values).min()) if len(values) > 1 else 0.0
        return CheckResult(check.name, kind, worst >= -tol, worst, "smallest step")
    if kind == "crossing":
        hit = torch.nonzero(values >= check.threshold)
        if len(hit) == 0:
            return CheckResult(check.name, kind, False, None, f"never reaches {check.threshold}")
        at = float(first[hit[0, 0]])
        return CheckResult(check.name, kind, check.low <= at <= check.high, at, f"expected in [{check.low}, {check.high}]")
    if kind == "value_range":
        lo, hi = float(values.min()), float(values.max())
        ok = (check.low is None or lo >= check.low) and (check.high is None or hi <= check.high)
        return CheckResult(check.name, kind, ok, hi if lo == hi else lo, f"range [{lo:.6g}, {hi:.6g}]")
    if kind == "max_abs":
        m = float(values.abs().max())
        return CheckResult(check.name, kind, m <= check.bound, m, f"bound {check.bound}")
    if kind == "rms":
        m = float(torch.sqrt(torch.mean(values**2)))
        return CheckResult(check.name, kind, m <= check.bound, m, f"bound {check.bound}")
    if kind == "argmax_in":
        at = float(first[int(torch.argmax(values))])
        return CheckResult(check.name, kind, check.low <= at <= check.high, at, f"expected in [{check.low}, {check.high}]")
    if kind == "positive":
        m = float(values.min())
        return CheckResult(check.name, kind, m > 0, m, "minimum")
    raise ValueError(f"unknown check kind {kind!r}")


def evaluate_against_oracle(
    model: ModelDefinition | CompiledModel,
    params: torch.Tensor | None = None,
    history: Sequence[LossReport] | None = None,
    networks: Mapping | None = None,
    grid: torch.Tensor | None = None,
) -> OracleReport:
    """Compare a solution with the problem's closed forms and property checks.

    The solution is given either as a flat parameter vector or as
    ``networks`` (name -> (function, order)). Errors are measured on the
    problem's eval grid.
    """
    compiled = model if isinstance(model, CompiledModel) else CompiledModel(model)
    m = compiled.model
    grid = eval_grid(m) if grid is None else grid

    def context_at(pts: torch.Tensor) -> Context:
        return compiled.context(params, pts, networks)

    report = OracleReport()
    ctx = context_at(grid)
    if m.oracle.closed_form:
        base = build_context(grid, m.state_names, compiled.param_values, {})
        for name, pieces in m.oracle.closed_form:
            err = (ctx[name] - evaluate_piecewise(pieces, base)).detach()
            report.errors[name] = {
                "max_abs": float(err.abs().max()),
                "rms": float(torch.sqrt(torch.mean(err**2))),
            }
    for check in m.oracle.checks:
        report.checks.append(_run_check(check, m, context_at, grid, history))
    return report


def solution_table(
    model: ModelDefinition | CompiledModel,
    params: torch.Tensor | None,
    grid: torch.Tensor,
    networks: Mapping | None = None,
) -> tuple[list[str], torch.Tensor]:
    """States, learnables and equation-defined variables evaluated on ``grid``."""
    compiled = model if isinstance(model, CompiledModel) else CompiledModel(model)
    m = compiled.model
    ctx = compiled.context(params, grid, networks)
    names = [*m.state_names, *(lv.name for lv in m.learnables), *(eq.lhs for eq in m.equations)]
    columns = [grid[:, i] for i in range(len(m.states))]
    columns += [ctx[name].detach() for name in names[len(m.states):]]
    return names, torch.stack(columns, dim=1)


__all__ = [
    "PROBLEMS",
    "CheckResult",
    "OracleReport",
    "closed_form_networks",
    "config_text",
    "eval_grid",
    "evaluate_against_oracle",
    "list_problems",
    "load_config",
    "load_problem",
    "problem_cauchy_euler",
    "problem_cauchy_euler_kan",
    "problem_diffusion",
    "problem_ditella",
    "problem_econ_1d",
    "problem_function_approx",
    "problem_log_utility",
    "problem_log_utility_system",
    "solution_table",
]
