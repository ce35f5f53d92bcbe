"""Assemble a model into a trainable objective and run the training loop."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

import torch

from ..autodiff import grad_wrt_params
from ..networks import NetworkState, forward, init_params, param_count
from ..optimizers import (
    OptimizerConfig,
    adam_step,
    adamw_step,
    lbfgs_step,
    new_state,
)
from .context import Context, build_context, sample_batch
from .losses import (
    LossReport,
    condition_loss,
    constraint_loss,
    constraint_mask,
    endogenous_loss,
    hjb_loss,
    system_loss,
    total_loss,
)
from .model import ConditionDef, ModelDefinition, Piece, PretrainDef, TrainingConfig
from .validate import validate_model

logger = logging.getLogger(__name__)


def evaluate_piecewise(pieces: Sequence[Piece], ctx: Context) -> torch.Tensor:
    """First matching branch wins; points matching no branch are NaN."""
    out = torch.full((ctx.batch_size,), math.nan, dtype=torch.float64)
    assigned = torch.zeros(ctx.batch_size, dtype=torch.bool)
    for piece in pieces:
        if piece.when is None:
            hit = ~assigned
        else:
            c = piece.when
            hit = constraint_mask(ctx.evaluate(c.lhs), ctx.evaluate(c.rhs), c.comparator) & ~assigned
        out = torch.where(hit, ctx.evaluate(piece.value), out)
        assigned = assigned | hit
    return out


class CompiledModel:
    """A validated model with its flat parameter layout.

    Parameters of all learnable variables live in one vector, concatenated
    in declaration order.
    """

    def __init__(self, model: ModelDefinition):
        self.names = validate_model(model)
        self.model = model
        self.slices: dict[str, slice] = {}
        offset = 0
        for lv in model.learnables:
            n = param_count(lv.spec)
            self.slices[lv.name] = slice(offset, offset + n)
            offset += n
        self.n_params = offset
        self.param_values = {p.name: float(p.value) for p in model.params}

    # -- parameters ------------------------------------------------------
    def init_params(self, generator: torch.Generator) -> torch.Tensor:
        return torch.cat([init_params(lv.spec, generator) for lv in self.model.learnables])

    def network_states(self, theta: torch.Tensor) -> dict[str, NetworkState]:
        return {
            lv.name: NetworkState(lv.spec, theta[self.slices[lv.name]].detach().clone())
            for lv in self.model.learnables
        }

    def params_from_states(self, states: dict[str, NetworkState]) -> torch.Tensor:
        chunks = []
        for lv in self.model.learnables:
            if lv.name not in states:
                raise KeyError(f"no network state for learnable {lv.name!r}")
            state = states[lv.name]
            if state.spec != lv.spec:
                raise ValueError(f"network state for {lv.name!r} does not match the model's architecture")
            chunks.append(state.params.to(torch.float64))
        return torch.cat(chunks)

    # -- evaluation ------------------------------------------------------
    def _networks(self, theta: torch.Tensor) -> dict:
        nets = {}
        for lv in self.model.learnables:
            sl = self.slices[lv.name]
            nets[lv.name] = ((lambda X, spec=lv.spec, sl=sl: forward(spec, theta[sl], X)), lv.order)
        return nets

    def context(self, theta: torch.Tensor | None, X: torch.Tensor, networks: Mapping | None = None) -> Context:
        """Every model variable over the batch ``X``.

        ``networks`` replaces the parameterized networks, e.g. by closed-form
        solutions; it maps each learnable name to ``(function of X, order)``.
        """
        nets = self._networks(theta) if networks is None else networks
        return build_context(X, self.model.state_names, self.param_values, nets, self.model.equations)

    def sample(self, generator: torch.Generator, batch_size: int) -> tuple[torch.Tensor, list[torch.Tensor]]:
        batch = sample_batch(self.model.states, batch_size, generator)
        return batch, [self.condition_points(c, generator) for c in self.model.conditions]

    def condition_points(self, cond: ConditionDef, generator: torch.Generator) -> torch.Tensor:
        if cond.points is not None:
            return torch.tensor(cond.points, dtype=torch.float64)
        states = self.model.states
        u = torch.rand(cond.count, len(states), generator=generator, dtype=torch.float64)
        low = torch.tensor([s.low for s in states], dtype=torch.float64)
        high = torch.tensor([s.high for s in states], dtype=torch.float64)
        pts = low + (high - low) * u
        for name, values in cond.fixed:
            col = self.model.state_names.index(name)
            blocks = torch.tensor_split(torch.arange(cond.count), len(values))
            for value, rows in zip(values, blocks):
                pts[rows, col] = float(value)
        return pts

    def components(
        self,
        theta: torch.Tensor | None,
        batch: torch.Tensor,
        cond_points: Sequence[torch.Tensor],
        networks: Mapping | None = None,
    ) -> dict[str, torch.Tensor]:
        """Unweighted loss of every labeled component, in a fixed order."""
        m = self.model
        out: dict[str, torch.Tensor] = {}
        for cond, pts in zip(m.conditions, cond_points):
            cctx = self.context(theta, pts, networks)
            out[cond.label] = condition_loss(cctx.evaluate(cond.lhs) - cctx.evaluate(cond.rhs))
        ctx = self.context(theta, batch, networks)
        for c in m.constraints:
            out[c.label] = constraint_loss(ctx.evaluate(c.lhs), ctx.evaluate(c.rhs), c.comparator)
        for e in m.endogenous:
            out[e.label] = endogenous_loss(ctx.evaluate(e.lhs), ctx.evaluate(e.rhs))
        for h in m.hjb:
            out[h.label] = hjb_loss(ctx.evaluate(h.expr))
        for system in m.systems:
            local = ctx.child(system.equations)
            mask = torch.ones(ctx.batch_size, dtype=torch.bool)
            for c in system.constraints:
                mask = mask & constraint_mask(local.evaluate(c.lhs), local.evaluate(c.rhs), c.comparator)
            residuals = [local.evaluate(e.lhs) - local.evaluate(e.rhs) for e in system.endogenous]
            out[system.label] = system_loss(mask, residuals, [e.weight for e in system.endogenous])
        return out

    @property
    def weights(self) -> dict[str, float]:
        m = self.model
        return {item.label: item.weight for group in (m.conditions, m.constraints, m.endogenous, m.hjb, m.systems) for item in group}

    def loss_and_grad(
        self, theta: torch.Tensor, batch: torch.Tensor, cond_points: Sequence[torch.Tensor], epoch: int = 0
    ) -> tuple[LossReport, torch.Tensor]:
        leaf = theta.detach().requires_grad_(True)
        comps = self.components(leaf, batch, cond_points)
        total = total_loss(comps, self.weights)
        grad, detached = grad_wrt_params(total, leaf)
        values = {k: float(v.detach()) for k, v in comps.items()}
        total_f = float(total.detach())
        report = LossReport(epoch, values, total_f, non_finite=not math.isfinite(total_f), detached=detached)
        return report, grad.detach()


@dataclass
class TrainResult:
    compiled: CompiledModel
    initial_params: torch.Tensor
    best_params: torch.Tensor
    final_params: torch.Tensor
    history: list[LossReport]
    best_epoch: int | None
    best_loss: float
    optimizer_state: object = None

    def best_states(self) -> dict[str, NetworkState]:
        return self.compiled.network_states(self.best_params)

    def final_states(self) -> dict[str, NetworkState]:
        return self.compiled.network_states(self.final_params)


def pretrain(
    compiled: CompiledModel,
    theta: torch.Tensor,
    target: PretrainDef,
    generator: torch.Generator,
    epochs: int | None = None,
) -> torch.Tensor:
    """Fit one learnable variable to an initial guess by MSE; returns new theta."""
    epochs = target.epochs if epochs is None else epochs
    lv = next(v for v in compiled.model.learnables if v.name == target.variable)
    sl = compiled.slices[lv.name]
    sub = theta[sl].detach().clone()
    state = new_state(target.optimizer)
    states = compiled.model.states
    params = compiled.param_values
    for epoch in range(epochs):
        X = sample_batch(states, target.batch_size, generator)
        ctx = build_context(X, compiled.model.state_names, params, {})
        with torch.no_grad():
            guess = evaluate_piecewise(target.guess, ctx)

        def closure(p: torch.Tensor) -> tuple[float, torch.Tensor]:
            leaf = p.detach().requires_grad_(True)
            loss = torch.mean((forward(lv.spec, leaf, X) - guess) ** 2)
            (g,) = torch.autograd.grad(loss, leaf)
            return float(loss.detach()), g

        loss, grad = closure(sub)
        if not math.isfinite(loss):
            continue
        sub = _apply_optimizer(target.optimizer, state, sub, grad, loss, closure)
        if epoch % 1000 == 0:
            logger.debug("pretrain %s epoch %d loss %.3e", lv.name, epoch, loss)
    out = theta.detach().clone()
    out[sl] = sub
    return out


def pretrain_mse(compiled: CompiledModel, theta: torch.Tensor, target: PretrainDef, points: torch.Tensor) -> float:
    """MSE between a learnable variable and its guess on given points."""
    lv = next(v for v in compiled.model.learnables if v.name == target.variable)
    ctx = build_context(points, compiled.model.state_names, compiled.param_values, {})
    with torch.no_grad():
        guess = evaluate_piecewise(target.guess, ctx)
        pred = forward(lv.spec, theta[compiled.slices[lv.name]], points)
    return float(torch.mean((pred - guess) ** 2))


def _apply_optimizer(config: OptimizerConfig, state, params, grad, loss, closure) -> torch.Tensor:
    if config.kind == "adam":
        return adam_step(params, grad, state, config)[0]
    if config.kind == "adamw":
        return adamw_step(params, grad, state, config)[0]
    return lbfgs_step(closure, params, state, config, loss=loss, grad=grad).params


def train(
    model: ModelDefinition | CompiledModel,
    config: TrainingConfig | None = None,
    params: torch.Tensor | None = None,
    run_pretrain: bool = True,
    callback: Callable[[LossReport], None] | None = None,
) -> TrainResult:
    """Train all learnable variables jointly.

    Each epoch samples a batch, evaluates the weighted total loss and takes
    one optimizer step. The parameters with the lowest total loss seen so
    far and the final parameters are both returned. Epochs whose loss is
    not finite are recorded and skipped.
    """
    compiled = model if isinstance(model, CompiledModel) else CompiledModel(model)
    config = config or compiled.model.training
    generator = torch.Generator().manual_seed(config.seed)
    theta = compiled.init_params(generator) if params is None else params.detach().clone().to(torch.float64)
    if theta.numel() != compiled.n_params:
        raise ValueError(f"expected {compiled.n_params} parameters, got {theta.numel()}")
    if run_pretrain:
        for target in compiled.model.pretrain:
            theta = pretrain(compiled, theta, target, generator)
    initial = theta.clone()
    best, best_loss, best_epoch = theta.clone(), math.inf, None
    opt_state = new_state(config.optimizer)
    history: list[LossReport] = []
    for epoch in range(config.epochs):
        batch, cond_points = compiled.sample(generator, config.batch_size)
        report, grad = compiled.loss_and_grad(theta, batch, cond_points, epoch)
        history.append(report)
        if callback is not None:
            callback(report)
        if report.non_finite:
            logger.warning("epoch %d: non-finite total loss; step skipped", epoch)
            continue
        if report.total < best_loss:
            best, best_loss, best_epoch = theta.clone(), report.total, epoch

        def closure(p: torch.Tensor) -> tuple[float, torch.Tensor]:
            r, g = compiled.loss_and_grad(p, batch, cond_points, epoch)
            return r.total, g

        theta = _apply_optimizer(config.optimizer, opt_state, theta, grad, report.total, closure)
    return TrainResult(compiled, initial, best, theta, history, best_epoch, best_loss, opt_state)
