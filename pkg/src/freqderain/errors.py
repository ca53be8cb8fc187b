"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor or image dimensions violate an operation's contract."""


class ConfigError(ValueError):
    """A configuration value is inconsistent or out of range."""


class DecodeError(ValueError):
    """An image file exists but cannot be decoded."""


class CheckpointError(RuntimeError):
    """Base class for checkpoint I/O failures."""


class VersionError(CheckpointError):
    """Checkpoint file format version is not supported."""


class CorruptCheckpoint(CheckpointError):
    """Checkpoint fails checksum or shape validation."""


class NaNLossError(RuntimeError):
    """Training aborted on a non-finite loss value.

    Carries enough state to diagnose the blow-up: the iteration index, the
    learning rate in effect, and per-parameter gradient norms (NaN/inf kept
    as-is so the offending tensors are identifiable).
    """

    def __init__(self, step, lr, loss, grad_norms):
        self.step = step
        self.lr = lr
        self.loss = loss
        self.grad_norms = grad_norms
        worst = sorted(grad_norms.items(), key=lambda kv: -kv[1])[:3] if grad_norms else []
        super().__init__(
            f"non-finite loss {loss!r} at step {step} (lr={lr:.3e}); "
            f"largest grad norms: {worst}"
        )
