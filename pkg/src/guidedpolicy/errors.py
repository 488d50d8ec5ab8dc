"""Error types shared across modules."""

from .diffcore import RejectedInput, TrainingDivergence


class ConfigurationError(ValueError):
    """Inconsistent configuration or a missing/incompatible upstream artifact."""


__all__ = ["ConfigurationError", "RejectedInput", "TrainingDivergence"]
