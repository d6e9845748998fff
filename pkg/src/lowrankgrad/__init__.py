"""Low-rank gradient training: factored updates, memory accounting, benchmarks.

Weight matrices are reparameterized through tall-skinny factor pairs so
optimizer state lives on the factors instead of the full matrix. The
package provides the dense kernels, the three reference optimizers, the
projection machinery, an analytic memory model, and a deterministic
benchmark harness over a small exponential-fitting objective.
"""

from .errors import (
    ConfigError,
    DivergenceError,
    GridError,
    LowRankGradError,
    ShapeError,
    SvdConvergenceError,
)
from .harness import (
    DEFAULT_LEARNING_RATES,
    ExperimentConfig,
    RunResult,
    TrainRecord,
    run_experiment,
    run_grid,
    toy_grid,
    write_results_csv,
)
from .lowrank import (
    FactorPair,
    LowRankStepReport,
    ProjectionMethod,
    effective_gradient,
    factor_gradients,
    full_rank_loss_delta,
    low_rank_step,
    predicted_loss_delta,
    sample_random_factors,
    svd_factors,
)
from .matrix import Matrix, SvdResult, gaussian, identity, truncated_svd, zeros
from .memory import (
    MemoryReport,
    crossover_rank,
    full_rank_memory,
    low_rank_memory,
)
from .optimizers import (
    AdamBiasMode,
    OptimizerKind,
    OptimizerSpec,
    OptimizerState,
    compute_delta,
    init_state,
    state_slot_count,
)
from .rng import Rng
from .toy import ToyProblem, sample_problem

__version__ = "0.1.0"

__all__ = [
    "AdamBiasMode",
    "ConfigError",
    "DEFAULT_LEARNING_RATES",
    "DivergenceError",
    "ExperimentConfig",
    "FactorPair",
    "GridError",
    "LowRankGradError",
    "LowRankStepReport",
    "Matrix",
    "MemoryReport",
    "OptimizerKind",
    "OptimizerSpec",
    "OptimizerState",
    "ProjectionMethod",
    "Rng",
    "RunResult",
    "ShapeError",
    "SvdConvergenceError",
    "SvdResult",
    "ToyProblem",
    "TrainRecord",
    "compute_delta",
    "crossover_rank",
    "effective_gradient",
    "factor_gradients",
    "full_rank_loss_delta",
    "full_rank_memory",
    "gaussian",
    "identity",
    "init_state",
    "low_rank_memory",
    "low_rank_step",
    "predicted_loss_delta",
    "run_experiment",
    "run_grid",
    "sample_problem",
    "sample_random_factors",
    "state_slot_count",
    "svd_factors",
    "toy_grid",
    "truncated_svd",
    "write_results_csv",
    "zeros",
    "__version__",
]
