"""Exception types raised across the canm package."""


class CanmError(Exception):
    """Base class for every error raised by canm."""


class ShapeError(CanmError, ValueError):
    """Tensor or image dimensions do not fit the operation."""


class UsageError(CanmError, ValueError):
    """An API was called in a way it does not support."""


class ConfigurationError(CanmError, ValueError):
    """A NetworkConfig violates one of its invariants."""


class NumericalError(CanmError, FloatingPointError):
    """A NaN/Inf or an exact division by zero was detected."""


class CheckpointError(CanmError, IOError):
    """A weight checkpoint or tensor file cannot be loaded."""


class ImageIOError(CanmError, IOError):
    """An image file is missing, corrupt or in an unsupported format."""


class TrainingDivergedError(CanmError, RuntimeError):
    """The training loss stopped being finite."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"Training diverged at step {step} (loss={loss})")
        self.step = step
        self.loss = loss


class GradcheckError(CanmError, RuntimeError):
    """The function under a gradient check raised while being perturbed."""

    def __init__(self, name: str, index: tuple, cause: Exception):
        super().__init__(f"Function raised while perturbing {name}{list(index)}: {cause}")
        self.name = name
        self.index = index
