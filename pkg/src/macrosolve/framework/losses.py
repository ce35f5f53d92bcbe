"""Loss families and their weighted total.

All residual losses are mean squared errors over a batch; constraints use
a rectified residual and systems a masked mean.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import torch

STRICT_EPS = 1e-8


def mse(residual: torch.Tensor) -> torch.Tensor:
    return torch.mean(residual * residual)


def condition_loss(residual: torch.Tensor) -> torch.Tensor:
    """Mean of the squared condition residual over its point set."""
    return mse(residual)


def endogenous_loss(lhs: torch.Tensor, rhs: torch.Tensor) -> torch.Tensor:
    return mse(lhs - rhs)


def hjb_loss(hjb: torch.Tensor) -> torch.Tensor:
    return mse(hjb)


def constraint_residual(lhs: torch.Tensor, rhs: torch.Tensor, comparator: str) -> torch.Tensor:
    """Signed violation: positive exactly where the constraint fails."""
    if comparator == "<=":
        return lhs - rhs
    if comparator == ">=":
        return rhs - lhs
    if comparator == "<":
        return lhs - rhs + STRICT_EPS
    if comparator == ">":
        return rhs - lhs + STRICT_EPS
    raise ValueError(f"unknown comparator {comparator!r}")


def constraint_loss(lhs: torch.Tensor, rhs: torch.Tensor, comparator: str) -> torch.Tensor:
    """Rectified MSE; strict comparators carry an extra 1e-8 margin."""
    return mse(torch.relu(constraint_residual(lhs, rhs, comparator)))


def constraint_mask(lhs: torch.Tensor, rhs: torch.Tensor, comparator: str) -> torch.Tensor:
    """Boolean mask of points satisfying the constraint (no gradient)."""
    lhs, rhs = lhs.detach(), rhs.detach()
    if comparator == "<=":
        return lhs <= rhs
    if comparator == ">=":
        return lhs >= rhs
    if comparator == "<":
        return lhs < rhs
    if comparator == ">":
        return lhs > rhs
    raise ValueError(f"unknown comparator {comparator!r}")


def masked_mse(residual: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """MSE over the masked points; an empty mask contributes exactly zero.

    Unselected points are zeroed with ``where`` so that NaN residuals outside
    the active region cannot leak into the loss or its gradient.
    """
    active = int(mask.sum())
    if active == 0:
        return torch.zeros((), dtype=residual.dtype)
    safe = torch.where(mask, residual, torch.zeros_like(residual))
    return torch.sum(safe * safe) / active


def system_loss(mask: torch.Tensor, residuals: Sequence[torch.Tensor], weights: Sequence[float]) -> torch.Tensor:
    total = torch.zeros((), dtype=torch.float64)
    for residual, weight in zip(residuals, weights):
        total = total + weight * masked_mse(residual, mask)
    return total


@dataclass
class LossReport:
    epoch: int
    components: dict[str, float]
    total: float
    non_finite: bool = False
    detached: bool = field(default=False, repr=False)


def total_loss(components: Mapping[str, torch.Tensor], weights: Mapping[str, float]) -> torch.Tensor:
    """Weighted sum in the insertion order of ``components``."""
    total = torch.zeros((), dtype=torch.float64)
    for label, value in components.items():
        total = total + weights.get(label, 1.0) * value
    return total
