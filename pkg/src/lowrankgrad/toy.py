"""Exp-matching objective used by the convergence benchmarks.

L(W) = (1/D^2) * sum_ij (exp(w_ij) - exp(target_ij))^2 for square D x D
matrices. The exponential supplies the non-linearity; with targets kept
inside [-2, 2] the loss is smooth, bounded away from overflow, and has a
unique stationary point at W == target, which makes it a clean oracle for
comparing optimizers and gradient projections.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .matrix import Matrix, _wrap, zeros
from .rng import Rng

TARGET_BOUND = 2.0


class ToyProblem:
    """A fixed D x D target matrix; immutable once constructed."""

    __slots__ = ("target", "dim", "_exp_target")

    def __init__(self, target: Matrix):
        if target.rows != target.cols:
            raise ShapeError(f"target must be square, got {target.shape}")
        if np.abs(target.array).max() > TARGET_BOUND:
            raise ValueError(f"target entries must lie in [-{TARGET_BOUND}, {TARGET_BOUND}]")
        self.target = target
        self.dim = target.rows
        self._exp_target = np.exp(target.array)

    def __repr__(self) -> str:
        return f"ToyProblem(dim={self.dim})"

    def _exp_checked(self, w: Matrix) -> np.ndarray:
        if w.shape != (self.dim, self.dim):
            raise ShapeError(f"w has shape {w.shape}, problem needs {(self.dim, self.dim)}")
        with np.errstate(over="ignore"):
            ew = np.exp(w.array)
        if not np.isfinite(ew).all():
            raise OverflowError("exp(w) overflowed; entries of w are out of range")
        return ew

    def loss(self, w: Matrix) -> float:
        """Mean squared error between exp(w) and exp(target); zero iff w == target."""
        d = self._exp_checked(w) - self._exp_target
        with np.errstate(over="ignore"):
            return float(np.mean(d * d))

    def loss_gradient(self, w: Matrix) -> Matrix:
        """Analytic gradient: (2/D^2) * exp(w) * (exp(w) - exp(target))."""
        if w.shape != (self.dim, self.dim):
            raise ShapeError(f"w has shape {w.shape}, problem needs {(self.dim, self.dim)}")
        with np.errstate(over="ignore", invalid="ignore"):
            ew = np.exp(w.array)
            grad = ew - self._exp_target
            grad *= ew
            grad *= 2.0 / self.dim**2
        # Checking the finished gradient covers exp overflow and the
        # squared-exp overflow in one test.
        if not np.isfinite(grad).all():
            raise OverflowError("gradient overflowed; entries of w are out of range")
        return _wrap(grad)


def sample_problem(rng: Rng, d: int) -> tuple[ToyProblem, Matrix]:
    """Fresh problem instance plus its starting point.

    Target entries are i.i.d. uniform on [-1, 1] (so exp stays within
    [1/e, e]) and the starting point is the zero matrix, both deterministic
    per seed.
    """
    if d < 1:
        raise ShapeError(f"dimension must be positive, got {d}")
    target = _wrap(2.0 * rng.uniform(d * d).reshape(d, d) - 1.0)
    return ToyProblem(target), zeros(d, d)
