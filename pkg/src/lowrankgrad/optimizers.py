"""Full-rank reference optimizers: gradient descent, momentum, Adam.

Each update is a pure function of (spec, state, gradient) returning the
additive delta and the successor state, so the same kernels drive both a
weight matrix directly and the low-rank factors attached to it. State
lives in explicit per-variable accumulators; their sizes are exactly what
the analytical memory model charges for each optimizer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeError
from .matrix import Matrix, _wrap, zeros


class OptimizerKind(enum.Enum):
    GRADIENT_DESCENT = "gd"
    MOMENTUM = "momentum"
    ADAM = "adam"


class AdamBiasMode(enum.Enum):
    """How Adam turns raw moment accumulators into an update.

    STANDARD is the usual rule: delta = -lr * mhat / (sqrt(shat) + eps)
    with mhat = m / (1 - beta1^t) and shat = s / (1 - beta2^t).

    SWAPPED is a deliberately kept variant with the two bias corrections
    exchanged and epsilon subtracted from the divisor instead of added:
    delta = -lr * (sqrt(1 - beta1^t) / (1 - beta2^t)) * m / (sqrt(s) - eps).
    Its divisor can pass through zero, so it is clamped to magnitude at
    least 1e-12. Exists so the two update rules can be compared; STANDARD
    is the default everywhere.
    """

    STANDARD = "standard"
    SWAPPED = "swapped"


_DIVISOR_FLOOR = 1e-12


@dataclass(frozen=True)
class OptimizerSpec:
    """Update rule selector plus hyperparameters.

    momentum_coeff applies to MOMENTUM only; beta1/beta2/epsilon and
    adam_bias_mode apply to ADAM only. Unused fields are ignored.
    """

    kind: OptimizerKind
    learning_rate: float
    momentum_coeff: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    adam_bias_mode: AdamBiasMode = AdamBiasMode.STANDARD

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum_coeff <= 1.0:
            raise ValueError(f"momentum_coeff must be in [0, 1], got {self.momentum_coeff}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"beta2 must be in [0, 1), got {self.beta2}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class OptimizerState:
    """Per-variable accumulators for one tracked matrix.

    Which accumulators are populated depends on the optimizer kind:
    gradient descent keeps none, momentum keeps the previous delta as
    ``velocity``, Adam keeps the first and second moment averages.
    ``step`` counts completed updates.
    """

    velocity: Matrix | None = None
    first_moment: Matrix | None = None
    second_moment: Matrix | None = None
    step: int = 0


def init_state(spec: OptimizerSpec, rows: int, cols: int) -> OptimizerState:
    """Zero-filled accumulators for a ``rows`` x ``cols`` variable."""
    if spec.kind is OptimizerKind.GRADIENT_DESCENT:
        return OptimizerState()
    if spec.kind is OptimizerKind.MOMENTUM:
        return OptimizerState(velocity=zeros(rows, cols))
    return OptimizerState(first_moment=zeros(rows, cols), second_moment=zeros(rows, cols))


def state_slot_count(spec: OptimizerSpec | OptimizerKind, rows: int, cols: int) -> int:
    """Scalar slots of optimizer state for one ``rows`` x ``cols`` variable.

    Only the optimizer kind matters, so a bare OptimizerKind is accepted
    in place of a full spec.
    """
    if rows < 1 or cols < 1:
        raise ShapeError(f"dimensions must be positive, got ({rows}, {cols})")
    kind = spec.kind if isinstance(spec, OptimizerSpec) else spec
    if kind is OptimizerKind.GRADIENT_DESCENT:
        return 0
    if kind is OptimizerKind.MOMENTUM:
        return rows * cols
    return 2 * rows * cols


def _state_mismatch(spec: OptimizerSpec, state: OptimizerState, grad: Matrix) -> ShapeError:
    return ShapeError(
        f"state accumulators do not match optimizer kind {spec.kind.value!r} "
        f"and gradient shape {grad.shape}"
    )


def compute_delta(
    spec: OptimizerSpec, state: OptimizerState, grad: Matrix
) -> tuple[Matrix, OptimizerState]:
    """One optimizer step: the additive update for the tracked variable.

    Returns ``(delta, new_state)``; the caller applies ``delta`` to the
    variable itself. Raises on shape mismatch or non-finite gradients.
    """
    if not grad.is_finite():
        raise ValueError("gradient contains non-finite entries")
    g = grad.array
    lr = spec.learning_rate

    if spec.kind is OptimizerKind.GRADIENT_DESCENT:
        if (
            state.velocity is not None
            or state.first_moment is not None
            or state.second_moment is not None
        ):
            raise _state_mismatch(spec, state, grad)
        return _wrap((-lr) * g), replace(state, step=state.step + 1)

    if spec.kind is OptimizerKind.MOMENTUM:
        if (
            state.velocity is None
            or state.first_moment is not None
            or state.second_moment is not None
            or state.velocity.shape != grad.shape
        ):
            raise _state_mismatch(spec, state, grad)
        velocity = spec.momentum_coeff * state.velocity.array
        velocity += (-lr) * g
        delta = _wrap(velocity)
        return delta, OptimizerState(velocity=delta, step=state.step + 1)

    if (
        state.first_moment is None
        or state.second_moment is None
        or state.velocity is not None
        or state.first_moment.shape != grad.shape
        or state.second_moment.shape != grad.shape
    ):
        raise _state_mismatch(spec, state, grad)

    # Adam: advance the moment averages, then apply the selected bias rule.
    # The in-place updates run on freshly allocated arrays; prior state is
    # never mutated.
    t = state.step + 1
    m = spec.beta1 * state.first_moment.array
    m += (1.0 - spec.beta1) * g
    s = spec.beta2 * state.second_moment.array
    s += (1.0 - spec.beta2) * (g * g)
    if spec.adam_bias_mode is AdamBiasMode.STANDARD:
        denom = s / (1.0 - spec.beta2**t)
        np.sqrt(denom, out=denom)
        denom += spec.epsilon
        delta = m / (1.0 - spec.beta1**t)
        delta /= denom
        delta *= -lr
    else:
        prefactor = np.sqrt(1.0 - spec.beta1**t) / (1.0 - spec.beta2**t)
        divisor = np.sqrt(s) - spec.epsilon
        divisor = np.where(
            np.abs(divisor) < _DIVISOR_FLOOR,
            np.where(divisor < 0.0, -_DIVISOR_FLOOR, _DIVISOR_FLOOR),
            divisor,
        )
        delta = (-lr) * prefactor * m / divisor
    new_state = OptimizerState(first_moment=_wrap(m), second_moment=_wrap(s), step=t)
    return _wrap(delta), new_state
