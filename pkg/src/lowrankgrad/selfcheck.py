"""Runtime invariant suites, exposed through the CLI.

Each suite exercises one mathematical property of the library on random
instances and reports pass/fail with a short detail string. The seed
only varies the instances; every property is universal, so any seed must
pass on a correct build. Functions from sibling modules are resolved
through the module objects at call time, so a deliberately broken
function (a negative-control build) is picked up by the suites.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lowrank, matrix, toy
from .rng import Rng


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str


def _random_matrix(rng: Rng, rows: int, cols: int, scale: float = 1.0) -> matrix.Matrix:
    return matrix.gaussian(rng, rows, cols, scale)


def _random_pair(rng: Rng, m: int, n: int, r: int) -> lowrank.FactorPair:
    return lowrank.FactorPair(
        u=_random_matrix(rng, m, r), v=_random_matrix(rng, n, r), rank=r
    )


def _dims(rng: Rng, low: int, high: int) -> int:
    span = high - low + 1
    return low + int(rng.uniform(1)[0] * span)


def check_toy_gradient(seed: int) -> SuiteResult:
    """Analytic toy gradient vs central finite differences."""
    rng = Rng(seed)
    d = 6
    problem, _ = toy.sample_problem(rng, d)
    h = 1e-6
    worst = 0.0
    for _ in range(5):
        w = _random_matrix(rng, d, d, 0.3)
        analytic = problem.loss_gradient(w).array
        base = w.array
        for i in range(d):
            for j in range(d):
                bumped = base.copy()
                bumped[i, j] += h
                up = problem.loss(matrix.Matrix(bumped))
                bumped[i, j] -= 2 * h
                down = problem.loss(matrix.Matrix(bumped))
                fd = (up - down) / (2 * h)
                err = abs(analytic[i, j] - fd) / max(1.0, abs(analytic[i, j]))
                worst = max(worst, err)
    passed = worst < 1e-6
    return SuiteResult("toy-gradient", passed, f"max relative error {worst:.2e}")


def check_effective_gradient_identity(seed: int) -> SuiteResult:
    """Factor-gradient expansion u@gv.T + gu@v.T equals the direct form."""
    rng = Rng(seed)
    worst = 0.0
    for _ in range(200):
        m, n = _dims(rng, 2, 12), _dims(rng, 2, 12)
        r = _dims(rng, 1, min(m, n, 4))
        g = _random_matrix(rng, m, n)
        pair = _random_pair(rng, m, n, r)
        grad_u, grad_v = lowrank.factor_gradients(g, pair)
        expanded = pair.u.array @ grad_v.array.T + grad_u.array @ pair.v.array.T
        direct = lowrank.effective_gradient(g, pair).array
        denom = max(np.linalg.norm(direct), 1e-300)
        worst = max(worst, float(np.linalg.norm(expanded - direct)) / denom)
    passed = worst < 1e-12
    return SuiteResult("effective-gradient-identity", passed, f"max relative diff {worst:.2e}")


def check_descent_sign(seed: int) -> SuiteResult:
    """Predicted loss change is never positive, and zero for zero gradients."""
    rng = Rng(seed)
    worst = -np.inf
    for _ in range(300):
        m, n = _dims(rng, 2, 10), _dims(rng, 2, 10)
        r = _dims(rng, 1, min(m, n, 4))
        scale = 10.0 ** (6.0 * rng.uniform(1)[0] - 3.0)
        g = _random_matrix(rng, m, n, scale)
        pair = _random_pair(rng, m, n, r)
        worst = max(worst, lowrank.predicted_loss_delta(g, pair, 0.1))
    zero = lowrank.predicted_loss_delta(
        matrix.zeros(4, 3), _random_pair(rng, 4, 3, 2), 0.1
    )
    passed = worst <= 0.0 and zero == 0.0
    return SuiteResult("descent-sign", passed, f"max prediction {worst:.2e}, zero-gradient {zero}")


def check_calibration(seed: int) -> SuiteResult:
    """Mean of u.T @ u over seeds is near identity/2 at m=500, r=5."""
    m, r = 500, 5
    total = np.zeros((r, r))
    seeds = 100
    for k in range(seeds):
        rng = Rng(seed + k)
        pair = lowrank.sample_random_factors(rng, m, m, r)
        u = pair.u.array
        total += u.T @ u
    mean = total / seeds
    diag = np.diag(mean)
    off = mean[~np.eye(r, dtype=bool)]
    passed = bool(
        np.all(diag > 0.45) and np.all(diag < 0.55)
        and np.all(off > -0.05) and np.all(off < 0.05)
    )
    detail = f"diag range [{diag.min():.3f}, {diag.max():.3f}], max |off| {np.abs(off).max():.3f}"
    return SuiteResult("factor-calibration", passed, detail)


def check_update_equivalence(seed: int) -> SuiteResult:
    """Factored-form weight change equals the expanded three-term form."""
    rng = Rng(seed)
    worst = 0.0
    for _ in range(200):
        m, n = _dims(rng, 2, 10), _dims(rng, 2, 10)
        r = _dims(rng, 1, min(m, n, 4))
        u = _random_matrix(rng, m, r).array
        v = _random_matrix(rng, n, r).array
        step_scale = 10.0 ** (-rng.uniform(1)[0])
        du = _random_matrix(rng, m, r, step_scale).array
        dv = _random_matrix(rng, n, r, step_scale).array
        refactored = (u + du) @ (v + dv).T - u @ v.T
        expanded = u @ dv.T + du @ v.T + du @ dv.T
        denom = max(np.linalg.norm(expanded), 1e-300)
        worst = max(worst, float(np.linalg.norm(refactored - expanded)) / denom)
    passed = worst < 1e-14
    return SuiteResult("update-equivalence", passed, f"max relative diff {worst:.2e}")


def check_svd_reconstruction(seed: int) -> SuiteResult:
    """Effective gradient under svd factors equals the best rank-r approximation."""
    rng = Rng(seed)
    worst = 0.0
    for _ in range(50):
        m, n = _dims(rng, 3, 10), _dims(rng, 3, 10)
        r = _dims(rng, 1, min(m, n, 3))
        g = _random_matrix(rng, m, n)
        best = matrix.truncated_svd(g, r).reconstruct().array
        eff = lowrank.effective_gradient(g, lowrank.svd_factors(g, r)).array
        denom = max(np.linalg.norm(best), 1e-300)
        worst = max(worst, float(np.linalg.norm(eff - best)) / denom)
    passed = worst < 1e-10
    return SuiteResult("svd-reconstruction", passed, f"max relative diff {worst:.2e}")


_SUITES = (
    check_toy_gradient,
    check_effective_gradient_identity,
    check_descent_sign,
    check_calibration,
    check_update_equivalence,
    check_svd_reconstruction,
)


def run_all(seed: int = 0) -> list[SuiteResult]:
    """Run every suite with instance streams derived from ``seed``."""
    return [suite(seed + 1000 * i) for i, suite in enumerate(_SUITES)]
