"""Cyclical learning-rate policy with per-cycle amplitude halving.

The rate oscillates in a triangle between ``base_lr`` and ``max_lr`` over
``2 * step_size`` epochs; each new cycle halves the triangle's height, so
peaks decay as (max - base) / 2^(cycle - 1) while valleys stay at base.
"""

from __future__ import annotations

from dataclasses import dataclass

from fedstack.errors import PreconditionError


@dataclass(frozen=True)
class LRSchedule:
    base_lr: float = 1e-5
    max_lr: float = 1e-3
    step_size: int = 4
    scale_mode: str = "halving"

    def __post_init__(self):
        if not self.base_lr > 0:
            raise PreconditionError("base_lr must be positive")
        if not self.base_lr < self.max_lr:
            raise PreconditionError("base_lr must be below max_lr")
        if self.step_size < 1:
            raise PreconditionError("step_size must be at least 1 epoch")
        if self.scale_mode != "halving":
            raise PreconditionError(f"unsupported scale_mode: {self.scale_mode!r}")

    def at(self, epoch: int) -> float:
        return lr_at(self, epoch)


def lr_at(schedule: LRSchedule, epoch: int) -> float:
    """Learning rate for a zero-based epoch index.

    Cycle boundaries return exactly ``base_lr`` and the first peak exactly
    ``max_lr``; later peaks are ``base_lr + (max_lr - base_lr) / 2**(c-1)``.
    """
    if epoch < 0:
        raise PreconditionError("epoch must be >= 0")
    cycle = epoch // (2 * schedule.step_size) + 1
    x = abs(epoch / schedule.step_size - 2 * cycle + 1)
    factor = max(0.0, 1.0 - x) * (1.0 / 2.0 ** (cycle - 1))
    if factor == 0.0:
        return schedule.base_lr
    if factor == 1.0:
        return schedule.max_lr
    return schedule.base_lr + (schedule.max_lr - schedule.base_lr) * factor
