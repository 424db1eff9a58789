"""Exception types shared across the package."""


class SolverError(RuntimeError):
    """Numerical solver failure (SVD breakdown, etc.)."""


class SolverDivergenceError(SolverError):
    """Iterates became non-finite; usually a bad step size."""


class PipelineError(RuntimeError):
    """Recovery pipeline cannot proceed (e.g. empty support)."""


class DataError(ValueError):
    """Dataset construction or splitting failure."""


class IngestError(DataError):
    """CSV parsing failure; message carries the offending location."""


class ConfigError(ValueError):
    """Benchmark configuration file is invalid."""
