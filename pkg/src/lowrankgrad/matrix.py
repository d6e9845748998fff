"""Dense row-major matrices and the small linear-algebra kernel set.

Everything in this package moves through :class:`Matrix`: weights,
gradients, low-rank factors, and optimizer accumulators. The wrapper
pins down the storage contract (float64, C order, 2-D, read-only) and
makes dimension mismatches loud errors instead of silent broadcasts.
Arithmetic is delegated to numpy/BLAS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, SvdConvergenceError
from .rng import Rng


class Matrix:
    """A dense real matrix with positive dimensions, stored row-major.

    Instances are immutable values: the backing array is marked
    non-writeable, and every operation returns a fresh matrix.
    """

    __slots__ = ("_a",)

    def __init__(self, values):
        a = np.array(values, dtype=np.float64, order="C")
        if a.ndim != 2:
            raise ShapeError(f"matrix must be 2-D, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ShapeError(f"matrix dimensions must be positive, got {a.shape}")
        a.flags.writeable = False
        self._a = a

    @property
    def rows(self) -> int:
        return self._a.shape[0]

    @property
    def cols(self) -> int:
        return self._a.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._a.shape

    @property
    def array(self) -> np.ndarray:
        """The backing 2-D array (read-only)."""
        return self._a

    @property
    def data(self) -> np.ndarray:
        """Entries as a flat row-major vector of length rows*cols (read-only)."""
        return self._a.reshape(-1)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self._a).all())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return self._a.shape == other._a.shape and bool(np.array_equal(self._a, other._a))

    __hash__ = None

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


def _wrap(a: np.ndarray) -> Matrix:
    """Adopt a freshly computed float64 C-order array without re-copying."""
    m = Matrix.__new__(Matrix)
    if not (a.flags.c_contiguous and a.dtype == np.float64):
        a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    m._a = a
    return m


def zeros(rows: int, cols: int) -> Matrix:
    """All-zero matrix of the given shape."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"matrix dimensions must be positive, got ({rows}, {cols})")
    return _wrap(np.zeros((rows, cols)))


def identity(n: int) -> Matrix:
    """The n-by-n identity."""
    if n < 1:
        raise ShapeError(f"identity size must be positive, got {n}")
    return _wrap(np.eye(n))


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product a @ b."""
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    return _wrap(a.array @ b.array)


def matmul_at_b(a: Matrix, b: Matrix) -> Matrix:
    """Product transpose(a) @ b without materializing the transpose."""
    if a.rows != b.rows:
        raise ShapeError(f"matmul_at_b: row counts differ, {a.shape} vs {b.shape}")
    return _wrap(a.array.T @ b.array)


def transpose(a: Matrix) -> Matrix:
    return _wrap(np.ascontiguousarray(a.array.T))


def _require_same_shape(op: str, a: Matrix, b: Matrix) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes differ, {a.shape} vs {b.shape}")


def add(a: Matrix, b: Matrix) -> Matrix:
    _require_same_shape("add", a, b)
    return _wrap(a.array + b.array)


def sub(a: Matrix, b: Matrix) -> Matrix:
    _require_same_shape("sub", a, b)
    return _wrap(a.array - b.array)


def scale(a: Matrix, s: float) -> Matrix:
    return _wrap(a.array * float(s))


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    """Element-wise product; shapes must match exactly (no broadcasting)."""
    _require_same_shape("hadamard", a, b)
    return _wrap(a.array * b.array)


def elementwise_divide(a: Matrix, b: Matrix) -> Matrix:
    """Element-wise quotient; shapes must match exactly (no broadcasting)."""
    _require_same_shape("elementwise_divide", a, b)
    return _wrap(a.array / b.array)


def elementwise_sqrt(a: Matrix) -> Matrix:
    """Element-wise square root; entries must be non-negative."""
    if a.array.min() < 0.0:
        raise ValueError("elementwise_sqrt: negative entry")
    return _wrap(np.sqrt(a.array))


def trace(a: Matrix) -> float:
    if a.rows != a.cols:
        raise ShapeError(f"trace: matrix is not square, {a.shape}")
    return float(np.trace(a.array))


def frobenius_norm(a: Matrix) -> float:
    return float(np.linalg.norm(a.array))


def gaussian(rng: Rng, rows: int, cols: int, stddev: float) -> Matrix:
    """Matrix of i.i.d. Normal(0, stddev^2) samples, deterministic per seed."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"matrix dimensions must be positive, got ({rows}, {cols})")
    return _wrap(rng.normal(rows * cols, stddev).reshape(rows, cols))


@dataclass(frozen=True)
class SvdResult:
    """Rank-R truncated singular value decomposition.

    ``left`` is M-by-R and ``right`` is N-by-R, both with orthonormal
    columns; ``singular`` holds the R largest singular values in
    non-increasing order.
    """

    left: Matrix
    singular: np.ndarray
    right: Matrix

    def reconstruct(self) -> Matrix:
        """left @ diag(singular) @ transpose(right)."""
        return _wrap((self.left.array * self.singular) @ self.right.array.T)


def truncated_svd(g: Matrix, r: int) -> SvdResult:
    """Best rank-``r`` decomposition of ``g`` in the Frobenius sense.

    Backed by LAPACK's divide-and-conquer driver, which at the sizes this
    package targets is both robust and exact well below the 1e-8 tolerance
    promised for the singular values. Requires 1 <= r <= min(rows, cols).
    """
    if not 1 <= r <= min(g.rows, g.cols):
        raise ShapeError(f"rank {r} not in [1, {min(g.rows, g.cols)}] for shape {g.shape}")
    try:
        u, s, vt = np.linalg.svd(g.array, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdConvergenceError(f"SVD backend did not converge: {exc}") from exc
    return SvdResult(
        left=_wrap(np.ascontiguousarray(u[:, :r])),
        singular=s[:r].copy(),
        right=_wrap(np.ascontiguousarray(vt[:r].T)),
    )
