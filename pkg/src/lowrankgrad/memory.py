"""Slot accounting for full-rank vs factored training memory.

A slot is one stored scalar. For a model of layers (m_i, n_i):

  full rank:  weights sum(m*n) + optimizer state k*sum(m*n)
              + transient gradient sum(m*n)
  low rank:   weights sum(m*n) + factors r*sum(m+n)
              + optimizer state k*r*sum(m+n) + transient gradient sum(m*n)

where k is the per-weight accumulator count of the optimizer (0 for plain
gradient descent, 1 for momentum, 2 for adam). The transient gradient is
full size in both modes: the factored method projects the gradient after
it has been formed, so the projection saves persistent state only. That
is also why gradient descent (k = 0) has no crossover: with nothing
persistent to shrink, factoring only adds slots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .optimizers import OptimizerKind, OptimizerSpec, state_slot_count

BYTES_PER_SLOT_F64 = 8
BYTES_PER_SLOT_F32 = 4

_ACCUMULATORS = {
    OptimizerKind.GRADIENT_DESCENT: 0,
    OptimizerKind.MOMENTUM: 1,
    OptimizerKind.ADAM: 2,
}

Optimizer = OptimizerSpec | OptimizerKind


def _kind_of(optimizer: Optimizer) -> OptimizerKind:
    return optimizer.kind if isinstance(optimizer, OptimizerSpec) else optimizer


def _check_layers(layers: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    checked = []
    for i, (m, n) in enumerate(layers):
        if m < 1 or n < 1:
            raise ValueError(f"layer {i} has non-positive dims ({m}, {n})")
        checked.append((int(m), int(n)))
    if not checked:
        raise ValueError("at least one layer is required")
    return checked


@dataclass(frozen=True)
class MemoryReport:
    """Slot breakdown of one training configuration."""

    weight_slots: int
    optimizer_state_slots: int
    factor_slots: int
    factor_state_slots: int
    transient_gradient_slots: int

    @property
    def total_slots(self) -> int:
        return (
            self.weight_slots
            + self.optimizer_state_slots
            + self.factor_slots
            + self.factor_state_slots
            + self.transient_gradient_slots
        )

    @property
    def persistent_slots(self) -> int:
        """Slots that survive between steps (everything but the gradient)."""
        return self.total_slots - self.transient_gradient_slots

    def total_bytes(self, bytes_per_slot: int = BYTES_PER_SLOT_F64) -> int:
        if bytes_per_slot not in (BYTES_PER_SLOT_F32, BYTES_PER_SLOT_F64):
            raise ValueError(f"bytes_per_slot must be 4 or 8, got {bytes_per_slot}")
        return self.total_slots * bytes_per_slot


def full_rank_memory(
    layers: Sequence[tuple[int, int]],
    optimizer: Optimizer,
    include_gradient: bool = True,
) -> MemoryReport:
    """Slot count for ordinary training on the given layer shapes."""
    checked = _check_layers(layers)
    weights = sum(m * n for m, n in checked)
    kind = _kind_of(optimizer)
    state = sum(state_slot_count(kind, m, n) for m, n in checked)
    return MemoryReport(
        weight_slots=weights,
        optimizer_state_slots=state,
        factor_slots=0,
        factor_state_slots=0,
        transient_gradient_slots=weights if include_gradient else 0,
    )


def low_rank_memory(
    layers: Sequence[tuple[int, int]],
    optimizer: Optimizer,
    rank: int,
    include_gradient: bool = True,
) -> MemoryReport:
    """Slot count with rank-``rank`` factors carrying the optimizer state.

    Weights stay full size (the factored update is applied back to W) and
    the gradient is still formed at full size each step; the state moves
    to the factors, k accumulators per factor entry.
    """
    checked = _check_layers(layers)
    if rank < 1:
        raise ValueError(f"rank must be at least 1, got {rank}")
    for i, (m, n) in enumerate(checked):
        if rank > min(m, n):
            raise ValueError(f"rank {rank} exceeds min dim of layer {i} ({m}, {n})")
    weights = sum(m * n for m, n in checked)
    factor = rank * sum(m + n for m, n in checked)
    k = _ACCUMULATORS[_kind_of(optimizer)]
    return MemoryReport(
        weight_slots=weights,
        optimizer_state_slots=0,
        factor_slots=factor,
        factor_state_slots=k * factor,
        transient_gradient_slots=weights if include_gradient else 0,
    )


def crossover_rank(layers: Sequence[tuple[int, int]], optimizer: Optimizer) -> int:
    """Largest rank at which factored training still fits in the full-rank budget.

    Solving low_rank_total <= full_rank_total for the rank gives

        r <= k * sum(m*n) / ((1 + k) * sum(m + n))

    and the floor of the right-hand side is returned (ties included: at
    exact equality the factored run still fits). Gradient descent has no
    optimizer state to trade away, so no rank qualifies and asking is an
    error.
    """
    checked = _check_layers(layers)
    k = _ACCUMULATORS[_kind_of(optimizer)]
    if k == 0:
        raise ValueError(
            "gradient descent keeps no optimizer state; factoring never saves memory"
        )
    products = sum(m * n for m, n in checked)
    sums = sum(m + n for m, n in checked)
    r = (k * products) // ((1 + k) * sums)
    if r < 1:
        raise ValueError(
            f"no rank saves memory for these layers (bound {k * products / ((1 + k) * sums):.3f})"
        )
    return r
