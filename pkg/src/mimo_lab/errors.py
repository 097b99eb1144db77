"""Exception types raised across the package."""


class SingularMatrixError(ValueError):
    """A matrix that must be inverted is rank deficient or too ill-conditioned."""


class CapacityError(ValueError):
    """An exhaustive enumeration would exceed the configured size guard."""


class CheckpointFormatError(ValueError):
    """A model checkpoint is truncated, corrupt, or of an unsupported version."""


class TrainingDivergedError(FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss, max_grad):
        self.epoch = epoch
        self.loss = loss
        self.max_grad = max_grad
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch} (max |grad| = {max_grad:.3e})"
        )
