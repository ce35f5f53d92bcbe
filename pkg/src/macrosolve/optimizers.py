"""Adam, AdamW and L-BFGS on a single flat parameter vector.

Each optimizer is a plain function of ``(params, gradient or closure,
state, config)`` returning new parameters; the state objects hold moment
estimates or curvature history and serialize with checkpoints.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import torch

logger = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "adamw", "lbfgs")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    history_size: int = 10
    max_line_search_steps: int = 25
    tolerance_grad: float = 1e-12
    max_iter: int = 1

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ValueError(f"optimizer kind must be one of {OPTIMIZERS}, got {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.history_size < 0:
            raise ValueError("history_size must be non-negative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class AdamState:
    step: int = 0
    m: torch.Tensor | None = None
    v: torch.Tensor | None = None

    def to_dict(self) -> dict:
        return {"step": self.step, "m": _tolist(self.m), "v": _tolist(self.v)}

    @classmethod
    def from_dict(cls, d: dict) -> "AdamState":
        return cls(d["step"], _fromlist(d["m"]), _fromlist(d["v"]))


@dataclass
class LBFGSState:
    s: list[torch.Tensor] = field(default_factory=list)
    y: list[torch.Tensor] = field(default_factory=list)
    step: int = 0

    def to_dict(self) -> dict:
        return {"step": self.step, "s": [_tolist(t) for t in self.s], "y": [_tolist(t) for t in self.y]}

    @classmethod
    def from_dict(cls, d: dict) -> "LBFGSState":
        return cls([_fromlist(t) for t in d["s"]], [_fromlist(t) for t in d["y"]], d["step"])


def _tolist(t):
    # float.hex keeps the round trip bit-exact
    return None if t is None else [float(x).hex() for x in t.tolist()]


def _fromlist(values):
    if values is None:
        return None
    return torch.tensor([float.fromhex(x) for x in values], dtype=torch.float64)


def new_state(config: OptimizerConfig) -> AdamState | LBFGSState:
    return LBFGSState() if config.kind == "lbfgs" else AdamState()


def state_from_dict(config: OptimizerConfig, d: dict) -> AdamState | LBFGSState:
    return LBFGSState.from_dict(d) if config.kind == "lbfgs" else AdamState.from_dict(d)


def adam_step(
    params: torch.Tensor, grad: torch.Tensor, state: AdamState, config: OptimizerConfig
) -> tuple[torch.Tensor, bool]:
    """One bias-corrected Adam update. Returns (new params, applied).

    Non-finite gradients leave params and state untouched and return False.
    """
    if not torch.isfinite(grad).all():
        logger.warning("non-finite gradient; Adam step skipped")
        return params, False
    if state.m is None:
        state.m = torch.zeros_like(params)
        state.v = torch.zeros_like(params)
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    state.m = b1 * state.m + (1 - b1) * grad
    state.v = b2 * state.v + (1 - b2) * grad * grad
    m_hat = state.m / (1 - b1**state.step)
    v_hat = state.v / (1 - b2**state.step)
    return params - config.learning_rate * m_hat / (torch.sqrt(v_hat) + config.eps), True


def adamw_step(
    params: torch.Tensor, grad: torch.Tensor, state: AdamState, config: OptimizerConfig
) -> tuple[torch.Tensor, bool]:
    """Adam with decoupled weight decay applied before the moment update."""
    if not torch.isfinite(grad).all():
        logger.warning("non-finite gradient; AdamW step skipped")
        return params, False
    if config.weight_decay:
        params = params * (1 - config.learning_rate * config.weight_decay)
    return adam_step(params, grad, state, config)


Closure = Callable[[torch.Tensor], tuple[float, torch.Tensor]]


def _two_loop(grad: torch.Tensor, state: LBFGSState) -> torch.Tensor:
    q = grad.clone()
    alphas = []
    rhos = [1.0 / float(y @ s) for s, y in zip(state.s, state.y)]
    for s, y, rho in reversed(list(zip(state.s, state.y, rhos))):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if state.s:
        s, y = state.s[-1], state.y[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(state.s, state.y, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


@dataclass
class LBFGSResult:
    params: torch.Tensor
    loss: float
    moved: bool
    line_search_failed: bool = False


def lbfgs_step(
    closure: Closure,
    params: torch.Tensor,
    state: LBFGSState,
    config: OptimizerConfig,
    loss: float | None = None,
    grad: torch.Tensor | None = None,
) -> LBFGSResult:
    """L-BFGS iterations on a fixed objective with Armijo backtracking.

    ``closure(params)`` returns ``(loss, grad)`` and must be deterministic.
    Curvature pairs with non-positive ``s.y`` are skipped. If no step length
    satisfies the Armijo condition the parameters stay put.
    """
    c1, shrink = 1e-4, 0.5
    if loss is None or grad is None:
        loss, grad = closure(params)
    moved = False
    for _ in range(config.max_iter):
        if not math.isfinite(loss) or not torch.isfinite(grad).all():
            logger.warning("non-finite loss or gradient; L-BFGS step skipped")
            return LBFGSResult(params, loss, moved, line_search_failed=not moved)
        if float(grad.abs().max()) <= config.tolerance_grad:
            break
        direction = _two_loop(grad, state) if config.history_size > 0 else -grad
        slope = float(grad @ direction)
        if slope >= 0:
            # history gave an ascent direction; fall back to steepest descent
            state.s.clear()
            state.y.clear()
            direction = -grad
            slope = float(grad @ direction)
        t = config.learning_rate
        for _ in range(config.max_line_search_steps):
            trial = params + t * direction
            new_loss, new_grad = closure(trial)
            if math.isfinite(new_loss) and new_loss <= loss + c1 * t * slope:
                break
            t *= shrink
        else:
            logger.info("L-BFGS line search failed; no step taken")
            return LBFGSResult(params, loss, moved, line_search_failed=True)
        s = trial - params
        y = new_grad - grad
        if float(s @ y) > 0 and config.history_size > 0:
            state.s.append(s)
            state.y.append(y)
            if len(state.s) > config.history_size:
                state.s.pop(0)
                state.y.pop(0)
        state.step += 1
        params, loss, grad = trial, new_loss, new_grad
        moved = True
    return LBFGSResult(params, loss, moved)
