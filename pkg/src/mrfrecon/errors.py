"""Exception types shared across the package."""


class SimulationDivergence(RuntimeError):
    """Signal simulation produced a non-finite state (bad parameters)."""


class ReconDivergence(RuntimeError):
    """Iterative reconstruction diverged (fidelity blew up or went non-finite)."""


class TrainingFailure(RuntimeError):
    """A training run failed to reach its required accuracy threshold."""


class UndefinedMetric(ValueError):
    """Metric is undefined for the given inputs (e.g. all-zero reference)."""


class ConfigError(ValueError):
    """Invalid or unknown configuration field."""
