"""
Exception hierarchy shared by every wbprune module
"""

from typing import Optional, Sequence


class WhiteBoxError(Exception):
    """Base class for all wbprune errors"""


class ShapeMismatchError(WhiteBoxError, ValueError):
    """Two operands disagree on a dimension"""

    def __init__(self, what: str, left: Sequence[int], right: Sequence[int]):
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{what}: shape {self.left} is incompatible with shape {self.right}")


class MissingActivationError(WhiteBoxError):
    """Backward pass called without the saved forward state"""


class NonFiniteError(WhiteBoxError, FloatingPointError):
    """NaN or Inf produced by an operation (debug checks only)"""


class BatchNormStateError(WhiteBoxError):
    """Eval-mode batchnorm requested before running statistics exist"""


class LabelError(WhiteBoxError, ValueError):
    """Label rows are not valid one-hot vectors"""


class MissingSoftLabelsError(WhiteBoxError):
    """A masked layer ran in training mode without soft labels"""


class ConfigError(WhiteBoxError, ValueError):
    """Invalid configuration value, file or override"""


class DataFormatError(WhiteBoxError, ValueError):
    """Dataset file could not be parsed"""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.reason = message
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class ArtifactError(WhiteBoxError):
    """A required run artifact is missing or unreadable"""


class ArchitectureParseError(WhiteBoxError, ValueError):
    """Architecture description could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CheckpointError(WhiteBoxError):
    """Malformed checkpoint file"""


class PlanError(WhiteBoxError, ValueError):
    """Pruning plan does not match the graph it is applied to"""


class UnreachableBudgetError(WhiteBoxError):
    """Target FLOPs reduction cannot be reached while keeping one channel per layer"""

    def __init__(self, alpha: float, max_rate: float):
        self.alpha = alpha
        self.max_rate = max_rate
        super().__init__(
            f"target FLOPs reduction {alpha:.4f} is unreachable; "
            f"maximum achievable rate is {max_rate:.4f}"
        )


class TrainingDivergedError(WhiteBoxError):
    """Loss became NaN or Inf during training"""

    def __init__(self, phase: str, epoch: int, batch: int, lr: float, loss: float):
        self.phase = phase
        self.epoch = epoch
        self.batch = batch
        self.lr = lr
        super().__init__(
            f"{phase} training diverged at epoch {epoch} batch {batch} "
            f"(lr={lr:g}, loss={loss})"
        )


class PhaseError(WhiteBoxError):
    """Failure inside one pipeline phase"""

    def __init__(self, phase: str, cause: BaseException):
        self.phase = phase
        self.cause = cause
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")


class EmptyDatasetError(WhiteBoxError, ValueError):
    """An operation that needs samples received an empty set"""
