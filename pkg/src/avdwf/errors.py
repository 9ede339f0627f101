"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """Invalid configuration or hyperparameter combination."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class EmptyInputError(ValueError):
    """Input is too short or empty to process."""


class AlignmentError(ValueError):
    """Not enough audio frames to cover the video block."""


class AUCUndefinedError(ValueError):
    """AUC requested on a single-class set.

    ``metrics`` carries whatever could still be computed (accuracy, confusion).
    """

    def __init__(self, message, metrics=None):
        super().__init__(message)
        self.metrics = metrics or {}


class BalanceError(ValueError):
    """Balancing is impossible (one class is missing)."""


class ManifestError(ValueError):
    """Manifest is empty or malformed."""


class TrainingDivergedError(RuntimeError):
    """Loss became NaN or infinite during training."""
