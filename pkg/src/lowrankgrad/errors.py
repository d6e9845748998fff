"""Exception types shared across the package."""


class LowRankGradError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(LowRankGradError, ValueError):
    """Operands have incompatible or invalid dimensions."""


class SvdConvergenceError(LowRankGradError):
    """The SVD backend failed to converge on the given matrix."""

    def __init__(self, message: str, iterations: int | None = None):
        super().__init__(message)
        self.iterations = iterations


class ConfigError(LowRankGradError, ValueError):
    """An experiment or CLI configuration is invalid."""


class DivergenceError(LowRankGradError):
    """A training run diverged (non-finite or runaway loss)."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"run diverged at step {step}: {detail}")
        self.step = step


class GridError(LowRankGradError):
    """One or more runs of a grid failed; surviving results are attached.

    ``failures`` holds ``(index, config, exception)`` triples in input
    order; ``results`` holds the successful runs, also in input order.
    """

    def __init__(self, failures, results):
        lines = ", ".join(f"run {i}: {exc}" for i, _, exc in failures)
        super().__init__(f"{len(failures)} grid run(s) failed: {lines}")
        self.failures = failures
        self.results = results
