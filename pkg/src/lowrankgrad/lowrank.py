"""Low-rank gradient projection: the memory-reduction mechanism.

A weight matrix W is treated as W = W_base + U @ V.T with tall-skinny
factors U (M x R) and V (N x R). The factors, not W, are what the
optimizer updates, so optimizer state shrinks from M*N slots to R*(M+N).
Per step the factors are re-chosen (calibrated random draws, or the top
singular vectors of the gradient), their gradients follow by the chain
rule from the full gradient G,

    grad_U = G @ V,        grad_V = G.T @ U,

and the weight update realized by stepping the factors is applied back
to W directly; W_base is never materialized. The update W actually sees
is the rank-limited surrogate U@U.T@G + G@V@V.T plus a second-order term.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .matrix import Matrix, _wrap, matmul, matmul_at_b, truncated_svd
from .optimizers import OptimizerSpec, OptimizerState, compute_delta
from .rng import Rng


class ProjectionMethod(enum.Enum):
    """How the factors are chosen each step.

    NONE is the full-rank baseline (no factors, optimizer on W itself);
    RANDOM draws fresh calibrated gaussian factors every step; SVD fits
    them to the top singular vectors of the current gradient.
    """

    NONE = "none"
    RANDOM = "random"
    SVD = "svd"


@dataclass(frozen=True)
class FactorPair:
    """The (U, V) factors of one weight matrix, of common rank R >= 1."""

    u: Matrix
    v: Matrix
    rank: int

    def __post_init__(self):
        if self.rank < 1:
            raise ShapeError(f"rank must be at least 1, got {self.rank}")
        if self.u.cols != self.rank or self.v.cols != self.rank:
            raise ShapeError(
                f"factor widths ({self.u.cols}, {self.v.cols}) must equal rank {self.rank}"
            )
        if self.rank > min(self.u.rows, self.v.rows):
            raise ShapeError(
                f"rank {self.rank} exceeds min dimension {min(self.u.rows, self.v.rows)}"
            )


class LowRankStepReport:
    """Diagnostics from one low-rank update step.

    ``delta_w`` is the realized weight change, ``predicted_loss_delta``
    the first-order loss-change estimate of the step, and ``factors`` the
    pair the step used. ``effective_gradient``, the rank-limited gradient
    surrogate the step descends, is derived from the retained gradient
    and factors on first access; training loops that never look at it do
    not pay for it.
    """

    __slots__ = ("delta_w", "predicted_loss_delta", "factors", "_g", "_effective")

    def __init__(
        self,
        delta_w: Matrix,
        predicted_loss_delta: float,
        factors: FactorPair,
        g: Matrix,
    ):
        self.delta_w = delta_w
        self.predicted_loss_delta = predicted_loss_delta
        self.factors = factors
        self._g = g
        self._effective: Matrix | None = None

    @property
    def effective_gradient(self) -> Matrix:
        if self._effective is None:
            self._effective = effective_gradient(self._g, self.factors)
        return self._effective


def sample_random_factors(rng: Rng, m: int, n: int, r: int) -> FactorPair:
    """Calibrated random factors: U ~ N(0, 1/(2m)), V ~ N(0, 1/(2n)) per entry.

    The per-entry standard deviations 1/sqrt(2m) and 1/sqrt(2n) make
    U.T @ U and V.T @ V concentrate around identity/2, i.e. both projector
    matrices U@U.T and V@V.T have eigenvalues near 1/2, so the two halves
    of the effective gradient together recover about the full gradient
    magnitude along the sampled subspace.

    Both factors come from one contiguous draw of (m + n) * r standard
    normals, u's entries first in row-major order, then v's.
    """
    if not 1 <= r <= min(m, n):
        raise ShapeError(f"rank {r} not in [1, {min(m, n)}] for dims ({m}, {n})")
    z = rng.normal((m + n) * r)
    u = z[: m * r].reshape(m, r) * (1.0 / math.sqrt(2.0 * m))
    v = z[m * r :].reshape(n, r) * (1.0 / math.sqrt(2.0 * n))
    return FactorPair(u=_wrap(u), v=_wrap(v), rank=r)


def svd_factors(g: Matrix, r: int) -> FactorPair:
    """Factors from the top-r singular vectors of ``g``, each scaled by 1/sqrt(2).

    With the scaling, U@U.T@g and g@V.T@V each contribute exactly half of
    the best rank-r approximation of ``g``, so the effective gradient
    equals that approximation.
    """
    result = truncated_svd(g, r)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    return FactorPair(
        u=_wrap(result.left.array * inv_sqrt2),
        v=_wrap(result.right.array * inv_sqrt2),
        rank=r,
    )


def _check_conformance(g: Matrix, pair: FactorPair) -> None:
    if g.rows != pair.u.rows or g.cols != pair.v.rows:
        raise ShapeError(
            f"gradient {g.shape} does not conform to factors "
            f"({pair.u.rows} x {pair.rank}, {pair.v.rows} x {pair.rank})"
        )


def factor_gradients(g: Matrix, pair: FactorPair) -> tuple[Matrix, Matrix]:
    """Chain-rule gradients of the factors: (g @ v, g.T @ u)."""
    _check_conformance(g, pair)
    return matmul(g, pair.v), matmul_at_b(g, pair.u)


def effective_gradient(g: Matrix, pair: FactorPair) -> Matrix:
    """The rank-limited gradient surrogate u@(u.T@g) + (g@v)@v.T.

    Algebraically identical to u @ grad_v.T + grad_u @ v.T with the
    chain-rule factor gradients substituted in.
    """
    _check_conformance(g, pair)
    u, v = pair.u.array, pair.v.array
    return _wrap(u @ (u.T @ g.array) + (g.array @ v) @ v.T)


def predicted_loss_delta(g: Matrix, pair: FactorPair, learning_rate: float) -> float:
    """First-order loss change of one gradient-descent step on the factors.

    Equals -lr * (||g.T @ u||_F^2 + ||g @ v||_F^2). Both terms are sums
    of squares, so the result is never positive.
    """
    if not learning_rate > 0.0:
        raise ValueError(f"learning_rate must be positive, got {learning_rate}")
    _check_conformance(g, pair)
    gtu = g.array.T @ pair.u.array
    gv = g.array @ pair.v.array
    return -learning_rate * (float(np.sum(gtu * gtu)) + float(np.sum(gv * gv)))


def full_rank_loss_delta(g: Matrix, learning_rate: float) -> float:
    """First-order loss change of an unprojected gradient-descent step.

    -lr * ||g||_F^2; the bound the projected prediction is compared to.
    """
    if not learning_rate > 0.0:
        raise ValueError(f"learning_rate must be positive, got {learning_rate}")
    sq = float(np.sum(g.array * g.array))
    return -learning_rate * sq


def low_rank_step(
    w: Matrix,
    g: Matrix,
    method: ProjectionMethod,
    r: int,
    spec: OptimizerSpec,
    state_u: OptimizerState,
    state_v: OptimizerState,
    rng: Rng | None = None,
) -> tuple[Matrix, OptimizerState, OptimizerState, LowRankStepReport]:
    """One full low-rank update of ``w`` given its gradient ``g``.

    Chooses factors per ``method``, computes their chain-rule gradients,
    steps each factor with the optimizer (states persist across calls even
    though the factors themselves are re-chosen), and applies the realized
    change

        delta_w = u @ delta_v.T + delta_u @ v.T + delta_u @ delta_v.T

    to ``w`` directly. The trailing term is second order in the learning
    rate. Returns the new weights, both successor states, and a report.
    """
    if method is ProjectionMethod.NONE:
        raise ValueError("low_rank_step requires a RANDOM or SVD projection method")
    if method is ProjectionMethod.RANDOM:
        if rng is None:
            raise ValueError("RANDOM projection requires an rng")
        pair = sample_random_factors(rng, g.rows, g.cols, r)
    else:
        pair = svd_factors(g, r)

    u, v = pair.u.array, pair.v.array
    ga = g.array
    # The chain-rule factor gradients, g@v and g.T@u; shapes were already
    # settled by the factor constructor, so the products run bare.
    gu = ga @ v
    gv = ga.T @ u
    delta_u, new_state_u = compute_delta(spec, state_u, _wrap(gu))
    delta_v, new_state_v = compute_delta(spec, state_v, _wrap(gv))

    du, dv = delta_u.array, delta_v.array
    delta_w = u @ dv.T + du @ v.T + du @ dv.T

    # gu and gv are exactly the two Gram factors of the loss-change
    # prediction, so the prediction is free here.
    predicted = -spec.learning_rate * (
        float(gu.ravel() @ gu.ravel()) + float(gv.ravel() @ gv.ravel())
    )

    report = LowRankStepReport(
        delta_w=_wrap(delta_w),
        predicted_loss_delta=predicted,
        factors=pair,
        g=g,
    )
    return _wrap(w.array + delta_w), new_state_u, new_state_v, report
