"""Exception taxonomy shared across the toolkit."""


class LfiError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(LfiError, ValueError):
    """An argument violates a documented precondition."""


class DecompositionError(LfiError):
    """Matrix factorization failed (non-square, asymmetric, or indefinite)."""


class SingularSystemError(LfiError):
    """Least-squares design matrix is rank deficient."""


class SimulationError(LfiError):
    """Base class for generative-model simulation failures."""


class SimulationOverflowError(SimulationError):
    """A latent state left the representable range; carries the step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ExplosionError(SimulationError):
    """Event count exceeded its cap; carries the simulated time reached."""

    def __init__(self, message, time_reached=None):
        super().__init__(message)
        self.time_reached = time_reached


class StiffnessError(SimulationError):
    """ODE state became non-finite; carries the time of failure."""

    def __init__(self, message, time_reached=None):
        super().__init__(message)
        self.time_reached = time_reached


class SummaryError(LfiError):
    """A summary statistic evaluated to a non-finite value."""


class TrainingDataError(LfiError):
    """Training-pair generation exhausted its retry budget."""


class DivergenceError(LfiError):
    """Training loss became non-finite; carries the epoch index."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class BundleFormatError(LfiError):
    """A persisted container has a bad magic number, version, or length."""


class SchemaMismatchError(LfiError):
    """Data offered to a fitted map does not match its summary schema."""


class RegionError(LfiError):
    """Bootstrap covariance is too degenerate for a confidence region."""


class ConfigError(LfiError):
    """Experiment configuration is malformed or inconsistent."""


class BenchmarkError(LfiError):
    """Benchmark bookkeeping failed (e.g. missing grid cells)."""
